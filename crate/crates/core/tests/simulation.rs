use std::sync::{Arc, Mutex};

use minipic::fields::{EX, RHOF};
use minipic::layout::SpaceTag;
use minipic::particles::{Particle, ParticleStore};
use minipic::sim::{Deck, HookFlags, HookRegistration, Simulation};
use minipic::{Error, Real};

fn tol(double: Real) -> Real {
    if minipic::is_single_precision() {
        1e-4
    } else {
        double
    }
}

fn deck(extra: &str) -> Deck {
    let text = format!(
        "[grid]
nx = 4
ny = 4
nz = 4
lx = 4.0
ly = 4.0
lz = 4.0
steps = 25
{extra}"
    );
    Deck::parse(&text).unwrap()
}

fn two_species(run: &str) -> Deck {
    deck(&format!(
        "[species.electron]
q = -1
m = 1
ppc = 2
u_th = 0.05
[species.ion]
q = 1
m = 100
ppc = 2
u_th = 0.01
[run]
seed = 3
workers = 1
diag_interval = 5
{run}"
    ))
}

#[test]
fn empty_deck_only_advances_the_counter() {
    let mut sim = Simulation::new(deck("[species.e]\nq = -1\nm = 1\nppc = 0\n[run]\nworkers = 1\n")).unwrap();
    assert_eq!(sim.total_particles(), 0);
    let before = sim.fields().buffer().clone();
    for _ in 0..3 {
        sim.step().unwrap();
    }
    assert_eq!(sim.step_count(), 3);
    assert_eq!(sim.fields().buffer(), &before);
    let rec = sim.emit_diagnostics().unwrap();
    assert_eq!((rec.e_energy, rec.b_energy, rec.kinetic[0], rec.total_energy), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn neutral_pair_has_zero_net_charge_density() {
    let sim = Simulation::new(two_species("")).unwrap();
    assert!(sim.warnings().is_empty());
    let mut sim = sim;
    sim.refresh_div_errors();
    let fa = sim.fields();
    let total: Real = fa.interior().iter().map(|&v| fa.get(v as usize, RHOF)).sum();
    let max = fa.max_abs(RHOF);
    assert!(total.abs() < tol(1e-12) && max < tol(1e-12), "sum {total}, max {max}");
}

#[test]
fn non_neutral_deck_warns() {
    let sim = Simulation::new(deck("[species.e]\nq = -1\nm = 1\nppc = 1\n[run]\nworkers = 1\n")).unwrap();
    assert_eq!(sim.warnings().len(), 1);
    assert!(sim.warnings()[0].contains("neutral"));
}

fn position(sim: &Simulation, p: &Particle) -> [Real; 3] {
    let g = sim.grid();
    let c = g.coords_of(p.voxel);
    std::array::from_fn(|a| (c[a] as Real - 1.0 + 0.5 * (p.offset[a] + 1.0)) * g.h[a])
}

#[test]
fn lone_drifting_particle_wraps_periodically() {
    let mut sim = Simulation::new(deck("[species.p]\nq = 1\nm = 1\nppc = 0\n[run]\nworkers = 1\n")).unwrap();
    let g = *sim.grid();
    // negligible weight, so its own field does not perturb the orbit
    let u = [0.9, -0.4, 0.25];
    let start = Particle { offset: [0.5, -0.2, 0.1], u, w: 1e-12, voxel: g.voxel_unchecked(4, 1, 2) };
    sim.species_mut()[0].store = ParticleStore::from_particles(&[start], sim.deck().run.layout);
    let x0 = position(&sim, &start);
    for _ in 0..10 {
        sim.step().unwrap();
    }
    let end = sim.species()[0].store.get(0);
    let x1 = position(&sim, &end);
    let gam = (1.0 + u.iter().map(|x| x * x).sum::<Real>()).sqrt();
    let ext = g.extent();
    for a in 0..3 {
        let want = (x0[a] + 10.0 * u[a] / gam * g.dt).rem_euclid(ext[a]);
        assert!((x1[a] - want).abs() < tol(1e-9), "axis {a}: {} vs {want}", x1[a]);
    }
    for a in 0..3 {
        assert!((end.u[a] - u[a]).abs() < tol(1e-9));
    }
}

#[test]
fn mirrored_pair_keeps_zero_total_momentum() {
    let mut sim = Simulation::new(deck("[species.p]\nq = 1\nm = 1\nppc = 0\n[run]\nworkers = 1\n")).unwrap();
    let g = *sim.grid();
    // mirror images about the node plane x = 2 (node index 3)
    let a = Particle { offset: [-0.4, 0.3, -0.1], u: [0.3, 0.1, -0.2], w: 1.0, voxel: g.voxel_unchecked(3, 2, 2) };
    let b = Particle { offset: [0.4, 0.3, -0.1], u: [-0.3, 0.1, -0.2], w: 1.0, voxel: g.voxel_unchecked(2, 2, 2) };
    let layout = sim.deck().run.layout;
    sim.species_mut()[0].store = ParticleStore::from_particles(&[a, b], layout);
    for _ in 0..40 {
        sim.step().unwrap();
        let px: Real = sim.species()[0].store.iter().map(|p| p.w * p.u[0]).sum();
        assert!(px.abs() < tol(1e-13), "step {}: {px}", sim.step_count());
    }
}

#[test]
fn diagnostics_rows_and_definitions() {
    let mut sim = Simulation::new(two_species("")).unwrap();
    let buf = SharedBuf::default();
    sim.set_diagnostics_sink(Box::new(buf.clone()));
    sim.run().unwrap();
    let text = buf.text();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 25 / 5 + 1);
    assert!(lines[0].starts_with("step,time,e_energy,b_energy,kinetic_electron,kinetic_ion,total_energy"));
    for rec in sim.history() {
        let sum = rec.e_energy + rec.b_energy + rec.kinetic.iter().sum::<Real>();
        assert_eq!(rec.total_energy, sum);
        assert_eq!(rec.particle_count, 2 * 2 * 64);
        if rec.step > 0 {
            assert!(rec.wall_seconds > 0.0);
            let expected = (rec.particle_count * 5) as f64 / rec.wall_seconds;
            assert!((rec.push_rate - expected).abs() <= 1e-12 * expected);
        }
    }
    let steps: Vec<u64> = sim.history().iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![0, 5, 10, 15, 20, 25]);
}

#[test]
fn deterministic_mode_zeroes_timing_columns() {
    let mut sim = Simulation::new(two_species("deterministic = true")).unwrap();
    sim.run().unwrap();
    assert!(sim.history().iter().all(|r| r.wall_seconds == 0.0 && r.push_rate == 0.0));
}

#[derive(Clone, Default)]
struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl SharedBuf {
    fn text(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
}

impl std::io::Write for SharedBuf {
    fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(b);
        Ok(b.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn hook_cadence() {
    let mut sim = Simulation::new(two_species("")).unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    sim.register_hook(
        HookRegistration::new("cadence", 10, move |ctx| {
            log.lock().unwrap().push(ctx.step);
            Ok(())
        })
        .with_flags(HookFlags::NONE),
    )
    .unwrap();
    sim.run().unwrap();
    assert_eq!(*seen.lock().unwrap(), vec![10, 20]);
}

fn counted_deltas(flags: HookFlags) -> (Vec<u64>, Vec<bool>) {
    let mut sim = Simulation::new(two_species("")).unwrap();
    let host = Arc::new(Mutex::new(Vec::new()));
    let h = Arc::clone(&host);
    sim.register_hook(
        HookRegistration::new("probe", 5, move |ctx| {
            let on_host = ctx.fields.space() == &SpaceTag::HOST
                && ctx.species.iter().all(|s| s.data.space() == &SpaceTag::HOST);
            h.lock().unwrap().push(on_host);
            Ok(())
        })
        .with_flags(flags),
    )
    .unwrap();
    let mut deltas = Vec::new();
    for _ in 0..4 {
        let before = sim.copies().count();
        for _ in 0..5 {
            sim.step().unwrap();
        }
        deltas.push(sim.copies().count() - before);
    }
    let host = host.lock().unwrap().clone();
    (deltas, host)
}

#[test]
fn empty_flags_move_nothing() {
    let (deltas, host) = counted_deltas(HookFlags::NONE);
    assert_eq!(deltas, vec![0; 4]);
    assert_eq!(host, vec![false; 4]);
}

#[test]
fn legacy_flags_copy_every_buffer_both_ways() {
    // two particle buffers and one field buffer, out and back
    let (deltas, host) = counted_deltas(HookFlags::LEGACY);
    assert_eq!(deltas, vec![6; 4]);
    assert_eq!(host, vec![true; 4]);
    assert_eq!(HookRegistration::new("x", 1, |_| Ok(())).flags, HookFlags::LEGACY);
}

#[test]
fn partial_flags() {
    let particles = HookFlags { particles_to_host: true, particles_back: true, ..HookFlags::NONE };
    assert_eq!(counted_deltas(particles).0, vec![4; 4]);
    let fields_out = HookFlags { fields_to_host: true, ..HookFlags::NONE };
    assert_eq!(counted_deltas(fields_out).0, vec![1; 4]);
}

#[test]
fn hook_writes_come_back_only_with_back_flags() {
    for (flags, expect_written) in [
        (HookFlags::LEGACY, true),
        (HookFlags { fields_to_host: true, ..HookFlags::NONE }, false),
        (HookFlags::NONE, true),
    ] {
        let mut sim = Simulation::new(two_species("")).unwrap();
        sim.register_hook(
            HookRegistration::new("poke", 1, |ctx| {
                let v = ctx.grid.voxel_unchecked(2, 2, 2).index();
                ctx.fields.set(v, EX, 123.0);
                Ok(())
            })
            .with_flags(flags),
        )
        .unwrap();
        sim.step().unwrap();
        let v = sim.grid().voxel_unchecked(2, 2, 2).index();
        assert_eq!(sim.fields().get(v, EX) == 123.0, expect_written, "{flags:?}");
    }
}

#[test]
fn failing_hook_aborts_with_its_name() {
    let mut sim = Simulation::new(two_species("")).unwrap();
    sim.register_hook(HookRegistration::new("exploder", 3, |_| Err("boom".into()))).unwrap();
    let err = sim.run().unwrap_err();
    match &err {
        Error::Hook { name, step, message } => {
            assert_eq!((name.as_str(), *step, message.as_str()), ("exploder", 3, "boom"));
        }
        other => panic!("unexpected error {other}"),
    }
    assert!(err.to_string().contains("exploder"));
    assert!(sim.register_hook(HookRegistration::new("zero", 0, |_| Ok(()))).is_err());
}

#[test]
fn oblique_moves_conserve_charge_at_every_node() {
    use minipic::fields::{JFX, JFY, JFZ};
    let mut sim = Simulation::new(deck("[species.p]\nq = 1\nm = 1\nppc = 0\n[run]\nworkers = 1\n")).unwrap();
    let g = *sim.grid();
    let layout = sim.deck().run.layout;
    let cases = [
        ([2, 2, 2], [0.0, 0.0, 0.0], [0.3, 0.2, 0.1]),
        ([2, 3, 1], [0.7, -0.6, 0.2], [2.0, -1.5, 1.2]),
        ([4, 4, 4], [0.95, 0.9, 0.85], [4.0, 3.0, 5.0]),
        ([1, 1, 1], [-0.95, -0.9, -0.85], [-4.0, -3.0, -5.0]),
    ];
    for (c, offset, u) in cases {
        let p = Particle { offset, u, w: 1.0, voxel: g.voxel_unchecked(c[0], c[1], c[2]) };
        sim.species_mut()[0].store = ParticleStore::from_particles(&[p], layout);
        sim.refresh_div_errors();
        let before: Vec<Real> = (0..g.num_voxels()).map(|v| sim.fields().get(v, RHOF)).collect();
        sim.clear_accumulators();
        sim.load_interpolators();
        sim.push_particles().unwrap();
        sim.reduce_currents();
        sim.unload_currents().unwrap();
        sim.refresh_div_errors();
        let fa = sim.fields();
        for v in g.interior_voxels() {
            let [i, j, k] = g.coords_of(v);
            let back = |axis: usize| {
                let mut c = [i, j, k];
                c[axis] = if c[axis] == 1 { g.n[axis] } else { c[axis] - 1 };
                g.voxel_unchecked(c[0], c[1], c[2]).index()
            };
            let div_j: Real = [JFX, JFY, JFZ]
                .iter()
                .enumerate()
                .map(|(a, &f)| (fa.get(v.index(), f) - fa.get(back(a), f)) / g.h[a])
                .sum();
            let residual = (fa.get(v.index(), RHOF) - before[v.index()]) / g.dt + div_j;
            assert!(residual.abs() < tol(1e-12), "start {c:?}: node {:?} residual {residual}", [i, j, k]);
        }
    }
}
