//! User hooks with explicit data-movement flags.
//!
//! A hook runs every `interval` steps. Its flags decide which buffers are
//! copied to host mirrors before the action and written back after it.
//! Only the real-valued particle and field buffers are transferred; each
//! transfer of one buffer counts as one copy.

use std::fmt;

use crate::fields::FieldArray;
use crate::grid::{GridDescriptor, VoxelId};
use crate::layout::{CopyCounter, FieldedBuffer, LayoutPolicy, Mirror, SpaceTag};
use crate::particles::Species;
use crate::{Error, Result};

/// Which transfers surround a hook invocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct HookFlags {
    pub particles_to_host: bool,
    pub fields_to_host: bool,
    pub particles_back: bool,
    pub fields_back: bool,
}

impl HookFlags {
    /// Everything out and everything back.
    pub const LEGACY: HookFlags = HookFlags {
        particles_to_host: true,
        fields_to_host: true,
        particles_back: true,
        fields_back: true,
    };

    pub const NONE: HookFlags = HookFlags {
        particles_to_host: false,
        fields_to_host: false,
        particles_back: false,
        fields_back: false,
    };

    pub fn is_empty(&self) -> bool {
        *self == HookFlags::NONE
    }

    fn particles_on_host(&self) -> bool {
        self.particles_to_host || self.particles_back
    }

    fn fields_on_host(&self) -> bool {
        self.fields_to_host || self.fields_back
    }
}

pub type HookError = Box<dyn std::error::Error + Send + Sync>;
pub type HookAction = Box<dyn FnMut(&mut HookContext<'_>) -> std::result::Result<(), HookError> + Send>;

pub struct HookRegistration {
    pub name: String,
    pub interval: u64,
    pub flags: HookFlags,
    pub action: HookAction,
}

impl HookRegistration {
    /// A hook with legacy flags.
    pub fn new<F>(name: impl Into<String>, interval: u64, action: F) -> Self
    where
        F: FnMut(&mut HookContext<'_>) -> std::result::Result<(), HookError> + Send + 'static,
    {
        HookRegistration {
            name: name.into(),
            interval,
            flags: HookFlags::LEGACY,
            action: Box::new(action),
        }
    }

    pub fn with_flags(mut self, flags: HookFlags) -> Self {
        self.flags = flags;
        self
    }
}

impl fmt::Debug for HookRegistration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HookRegistration")
            .field("name", &self.name)
            .field("interval", &self.interval)
            .field("flags", &self.flags)
            .finish_non_exhaustive()
    }
}

/// Particle data handed to a hook.
pub struct SpeciesAccess<'a> {
    pub name: &'a str,
    /// Host mirror when the flags move particles, otherwise the device
    /// buffer itself.
    pub data: &'a mut FieldedBuffer,
    pub voxels: &'a [VoxelId],
}

/// What a hook action may touch. Check [`FieldedBuffer::space`] to see
/// whether a buffer is a host mirror or device storage.
pub struct HookContext<'a> {
    pub step: u64,
    pub grid: &'a GridDescriptor,
    pub species: Vec<SpeciesAccess<'a>>,
    pub fields: &'a mut FieldedBuffer,
}

pub(crate) struct Hook {
    reg: HookRegistration,
    particle_mirrors: Vec<Mirror>,
    field_mirror: Option<Mirror>,
}

impl Hook {
    pub(crate) fn new(reg: HookRegistration) -> Result<Self> {
        if reg.interval == 0 {
            return Err(Error::usage(format!("hook `{}` needs an interval of at least 1", reg.name)));
        }
        Ok(Hook {
            reg,
            particle_mirrors: Vec::new(),
            field_mirror: None,
        })
    }

    pub(crate) fn due(&self, step: u64) -> bool {
        step.is_multiple_of(self.reg.interval)
    }

    pub(crate) fn run(
        &mut self,
        step: u64,
        grid: &GridDescriptor,
        species: &mut [Species],
        fields: &mut FieldArray,
        counter: &CopyCounter,
    ) -> Result<()> {
        let flags = self.reg.flags;
        if flags.particles_on_host() {
            if self.particle_mirrors.len() != species.len() {
                self.particle_mirrors = species
                    .iter()
                    .map(|sp| Mirror::of(sp.store.buffer(), SpaceTag::HOST, LayoutPolicy::RecordMajor))
                    .collect();
            }
            for (m, sp) in self.particle_mirrors.iter_mut().zip(species.iter()) {
                m.fit(sp.store.buffer());
                if flags.particles_to_host {
                    m.pull(sp.store.buffer(), counter)?;
                }
            }
        }
        if flags.fields_on_host() {
            let m = self.field_mirror.get_or_insert_with(|| {
                let buf = fields.buffer();
                Mirror::of(buf, SpaceTag::HOST, buf.policy())
            });
            if flags.fields_to_host {
                m.pull(fields.buffer(), counter)?;
            }
        }

        let result = {
            let mut access = Vec::with_capacity(species.len());
            let mut mirrors = self.particle_mirrors.iter_mut();
            for sp in species.iter_mut() {
                let name = sp.name.as_str();
                let (data, voxels) = sp.store.parts_mut();
                let data = match (flags.particles_on_host(), mirrors.next()) {
                    (true, Some(m)) => m.view_mut(data),
                    _ => data,
                };
                access.push(SpeciesAccess { name, data, voxels });
            }
            let fbuf = fields.buffer_mut();
            let fbuf = match (flags.fields_on_host(), self.field_mirror.as_mut()) {
                (true, Some(m)) => m.view_mut(fbuf),
                _ => fbuf,
            };
            let mut ctx = HookContext { step, grid, species: access, fields: fbuf };
            (self.reg.action)(&mut ctx)
        };
        result.map_err(|e| Error::Hook {
            name: self.reg.name.clone(),
            step,
            message: e.to_string(),
        })?;

        if flags.particles_back {
            for (m, sp) in self.particle_mirrors.iter().zip(species.iter_mut()) {
                m.push(sp.store.buffer_mut(), counter)?;
            }
        }
        if flags.fields_back {
            if let Some(m) = &self.field_mirror {
                m.push(fields.buffer_mut(), counter)?;
            }
        }
        Ok(())
    }
}
