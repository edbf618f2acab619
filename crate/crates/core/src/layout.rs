//! Layout-polymorphic buffers, memory-space mirrors and scatter-reduce
//! accumulation.
//!
//! A [`FieldedBuffer`] stores `num_records × num_fields` reals and is always
//! addressed by `(record, field)`; the [`LayoutPolicy`] only decides how that
//! pair maps onto the flat storage. Algorithms written against the accessors
//! produce identical results under either policy.
//!
//! Every buffer carries a [`SpaceTag`]. Copies between buffers go through
//! [`copy_between`], which bumps a [`CopyCounter`]; a [`Mirror`] created in
//! the same space as its source aliases it and never copies.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayoutPolicy {
    /// All fields of one record are contiguous (array of structs).
    RecordMajor,
    /// All records of one field are contiguous (struct of arrays).
    FieldMajor,
}

impl LayoutPolicy {
    pub const ALL: [LayoutPolicy; 2] = [LayoutPolicy::RecordMajor, LayoutPolicy::FieldMajor];

    pub fn name(self) -> &'static str {
        match self {
            LayoutPolicy::RecordMajor => "RecordMajor",
            LayoutPolicy::FieldMajor => "FieldMajor",
        }
    }
}

impl fmt::Display for LayoutPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayoutPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "RecordMajor" => Ok(LayoutPolicy::RecordMajor),
            "FieldMajor" => Ok(LayoutPolicy::FieldMajor),
            other => Err(format!("unknown layout `{other}` (expected RecordMajor or FieldMajor)")),
        }
    }
}

/// Storage offset of `(record, field)` in a `num_records × num_fields` buffer.
pub fn linear_offset(
    record: usize,
    field: usize,
    num_records: usize,
    num_fields: usize,
    policy: LayoutPolicy,
) -> Result<usize> {
    if record >= num_records || field >= num_fields {
        return Err(Error::usage(format!(
            "index ({record}, {field}) out of range for {num_records}x{num_fields} buffer"
        )));
    }
    Ok(offset_unchecked(record, field, num_records, num_fields, policy))
}

#[inline(always)]
fn offset_unchecked(
    record: usize,
    field: usize,
    num_records: usize,
    num_fields: usize,
    policy: LayoutPolicy,
) -> usize {
    match policy {
        LayoutPolicy::RecordMajor => record * num_fields + field,
        LayoutPolicy::FieldMajor => field * num_records + record,
    }
}

/// Label of a memory space. Both spaces share physical memory in this
/// engine; only the label decides whether a mirror aliases or copies.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpaceTag(Cow<'static, str>);

impl SpaceTag {
    pub const HOST: SpaceTag = SpaceTag(Cow::Borrowed("host"));
    pub const DEVICE: SpaceTag = SpaceTag(Cow::Borrowed("device"));

    pub fn new(label: impl Into<String>) -> Self {
        SpaceTag(Cow::Owned(label.into()))
    }

    pub fn label(&self) -> &str {
        &self.0
    }
}

/// Counts deep copies performed by [`copy_between`].
#[derive(Debug, Default)]
pub struct CopyCounter(AtomicU64);

impl CopyCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

/// A two-dimensional `(record, field)` array of reals with a runtime layout.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldedBuffer {
    num_records: usize,
    num_fields: usize,
    policy: LayoutPolicy,
    space: SpaceTag,
    data: Vec<Real>,
}

impl FieldedBuffer {
    pub fn new(num_records: usize, num_fields: usize, policy: LayoutPolicy, space: SpaceTag) -> Self {
        FieldedBuffer {
            num_records,
            num_fields,
            policy,
            space,
            data: vec![0.0; num_records * num_fields],
        }
    }

    /// Builds a buffer from record-ordered rows.
    pub fn from_records<const F: usize>(
        records: &[[Real; F]],
        policy: LayoutPolicy,
        space: SpaceTag,
    ) -> Self {
        let mut buf = FieldedBuffer::new(records.len(), F, policy, space);
        for (r, rec) in records.iter().enumerate() {
            for (f, &v) in rec.iter().enumerate() {
                buf.set(r, f, v);
            }
        }
        buf
    }

    pub fn num_records(&self) -> usize {
        self.num_records
    }

    pub fn num_fields(&self) -> usize {
        self.num_fields
    }

    pub fn policy(&self) -> LayoutPolicy {
        self.policy
    }

    pub fn space(&self) -> &SpaceTag {
        &self.space
    }

    /// Raw storage in layout order.
    pub fn as_slice(&self) -> &[Real] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Real] {
        &mut self.data
    }

    #[inline(always)]
    pub fn offset(&self, record: usize, field: usize) -> usize {
        debug_assert!(record < self.num_records && field < self.num_fields);
        offset_unchecked(record, field, self.num_records, self.num_fields, self.policy)
    }

    #[inline(always)]
    pub fn get(&self, record: usize, field: usize) -> Real {
        self.data[self.offset(record, field)]
    }

    #[inline(always)]
    pub fn set(&mut self, record: usize, field: usize, value: Real) {
        let o = self.offset(record, field);
        self.data[o] = value;
    }

    #[inline(always)]
    pub fn add(&mut self, record: usize, field: usize, value: Real) {
        let o = self.offset(record, field);
        self.data[o] += value;
    }

    pub fn try_get(&self, record: usize, field: usize) -> Result<Real> {
        linear_offset(record, field, self.num_records, self.num_fields, self.policy).map(|o| self.data[o])
    }

    /// Sets every entry of `field` to `value`.
    pub fn fill_field(&mut self, field: usize, value: Real) {
        for r in 0..self.num_records {
            self.set(r, field, value);
        }
    }

    pub fn fill(&mut self, value: Real) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// Reorders records so that new record `i` is old record `order[i]`.
    pub fn permute_records(&mut self, order: &[usize]) {
        assert_eq!(order.len(), self.num_records);
        let mut out = vec![0.0; self.data.len()];
        for (dst, &src) in order.iter().enumerate() {
            for f in 0..self.num_fields {
                out[self.offset(dst, f)] = self.data[self.offset(src, f)];
            }
        }
        self.data = out;
    }

    /// Splits the buffer into disjoint mutable record ranges at the given
    /// ascending cut points. `cuts` must start at 0 and end at
    /// `num_records`; range `i` covers `cuts[i]..cuts[i + 1]`.
    pub fn split_records_mut(&mut self, cuts: &[usize]) -> Vec<RecordsMut<'_>> {
        assert!(cuts.first() == Some(&0) && cuts.last() == Some(&self.num_records));
        assert!(cuts.windows(2).all(|w| w[0] <= w[1]), "cuts must be ascending");
        let nf = self.num_fields;
        let n = self.num_records;
        match self.policy {
            LayoutPolicy::RecordMajor => {
                let mut out = Vec::with_capacity(cuts.len() - 1);
                let mut rest: &mut [Real] = &mut self.data;
                for w in cuts.windows(2) {
                    let (head, tail) = rest.split_at_mut((w[1] - w[0]) * nf);
                    out.push(RecordsMut::RecordMajor {
                        data: head,
                        num_fields: nf,
                    });
                    rest = tail;
                }
                out
            }
            LayoutPolicy::FieldMajor => {
                let mut per_range: Vec<Vec<&mut [Real]>> =
                    (0..cuts.len() - 1).map(|_| Vec::with_capacity(nf)).collect();
                for field in self.data.chunks_mut(n.max(1)).take(nf) {
                    let mut rest = field;
                    for (i, w) in cuts.windows(2).enumerate() {
                        let (head, tail) = rest.split_at_mut(w[1] - w[0]);
                        per_range[i].push(head);
                        rest = tail;
                    }
                }
                if n == 0 {
                    // chunks_mut yields nothing for empty storage
                    for r in per_range.iter_mut() {
                        r.clear();
                        for _ in 0..nf {
                            r.push(Default::default());
                        }
                    }
                }
                per_range
                    .into_iter()
                    .map(|fields| RecordsMut::FieldMajor { fields })
                    .collect()
            }
        }
    }
}

/// A mutable window onto a contiguous range of records of a
/// [`FieldedBuffer`]. Indices are local to the window.
#[derive(Debug)]
pub enum RecordsMut<'a> {
    RecordMajor { data: &'a mut [Real], num_fields: usize },
    FieldMajor { fields: Vec<&'a mut [Real]> },
}

impl RecordsMut<'_> {
    pub fn len(&self) -> usize {
        match self {
            RecordsMut::RecordMajor { data, num_fields } => data.len() / num_fields,
            RecordsMut::FieldMajor { fields } => fields.first().map_or(0, |f| f.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline(always)]
    pub fn get(&self, record: usize, field: usize) -> Real {
        match self {
            RecordsMut::RecordMajor { data, num_fields } => data[record * num_fields + field],
            RecordsMut::FieldMajor { fields } => fields[field][record],
        }
    }

    #[inline(always)]
    pub fn set(&mut self, record: usize, field: usize, value: Real) {
        match self {
            RecordsMut::RecordMajor { data, num_fields } => data[record * *num_fields + field] = value,
            RecordsMut::FieldMajor { fields } => fields[field][record] = value,
        }
    }
}

/// Copies every `(record, field)` value of `src` into `dst`. The two
/// buffers may use different layouts and spaces but must have the same
/// shape. Each call counts as one copy.
pub fn copy_between(src: &FieldedBuffer, dst: &mut FieldedBuffer, counter: &CopyCounter) -> Result<()> {
    if src.num_records != dst.num_records || src.num_fields != dst.num_fields {
        return Err(Error::usage(format!(
            "copy shape mismatch: {}x{} -> {}x{}",
            src.num_records, src.num_fields, dst.num_records, dst.num_fields
        )));
    }
    if src.policy == dst.policy {
        dst.data.copy_from_slice(&src.data);
    } else {
        for r in 0..src.num_records {
            for f in 0..src.num_fields {
                dst.set(r, f, src.get(r, f));
            }
        }
    }
    counter.bump();
    Ok(())
}

/// The view of a buffer in another memory space. When the target space
/// equals the source's, the mirror is the source itself and transfers are
/// no-ops.
#[derive(Clone, Debug)]
pub struct Mirror {
    space: SpaceTag,
    storage: Option<FieldedBuffer>,
}

impl Mirror {
    pub fn of(src: &FieldedBuffer, space: SpaceTag, policy: LayoutPolicy) -> Self {
        let storage = (src.space != space)
            .then(|| FieldedBuffer::new(src.num_records, src.num_fields, policy, space.clone()));
        Mirror { space, storage }
    }

    pub fn space(&self) -> &SpaceTag {
        &self.space
    }

    pub fn is_alias(&self) -> bool {
        self.storage.is_none()
    }

    /// Reallocates a separate mirror if `src` changed shape since creation.
    pub fn fit(&mut self, src: &FieldedBuffer) {
        if let Some(buf) = &mut self.storage {
            if buf.num_records != src.num_records || buf.num_fields != src.num_fields {
                *buf = FieldedBuffer::new(src.num_records, src.num_fields, buf.policy, self.space.clone());
            }
        }
    }

    pub fn view<'a>(&'a self, src: &'a FieldedBuffer) -> &'a FieldedBuffer {
        self.storage.as_ref().unwrap_or(src)
    }

    pub fn view_mut<'a>(&'a mut self, src: &'a mut FieldedBuffer) -> &'a mut FieldedBuffer {
        self.storage.as_mut().unwrap_or(src)
    }

    /// Brings the mirror up to date with `src`.
    pub fn pull(&mut self, src: &FieldedBuffer, counter: &CopyCounter) -> Result<()> {
        match &mut self.storage {
            Some(buf) => copy_between(src, buf, counter),
            None => Ok(()),
        }
    }

    /// Writes the mirror's contents back into `dst`.
    pub fn push(&self, dst: &mut FieldedBuffer, counter: &CopyCounter) -> Result<()> {
        match &self.storage {
            Some(buf) => copy_between(buf, dst, counter),
            None => Ok(()),
        }
    }
}

/// How concurrent scatter contributions are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScatterBackend {
    /// One private copy per worker, merged in ascending worker order.
    Replicated,
    /// One shared array updated with atomic read-modify-write.
    SharedUpdate,
    /// One worker, one array; the reference ordering.
    Sequential,
}

impl ScatterBackend {
    pub const ALL: [ScatterBackend; 3] = [
        ScatterBackend::Replicated,
        ScatterBackend::SharedUpdate,
        ScatterBackend::Sequential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScatterBackend::Replicated => "Replicated",
            ScatterBackend::SharedUpdate => "SharedUpdate",
            ScatterBackend::Sequential => "Sequential",
        }
    }
}

impl fmt::Display for ScatterBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScatterBackend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "Replicated" => Ok(ScatterBackend::Replicated),
            "SharedUpdate" => Ok(ScatterBackend::SharedUpdate),
            "Sequential" => Ok(ScatterBackend::Sequential),
            other => Err(format!(
                "unknown scatter backend `{other}` (expected Replicated, SharedUpdate or Sequential)"
            )),
        }
    }
}

/// An atomic cell holding one [`Real`].
#[derive(Debug, Default)]
pub struct AtomicReal(AtomicBits);

#[cfg(not(feature = "single"))]
type AtomicBits = AtomicU64;
#[cfg(feature = "single")]
type AtomicBits = std::sync::atomic::AtomicU32;

impl AtomicReal {
    pub fn new(v: Real) -> Self {
        AtomicReal(AtomicBits::new(v.to_bits()))
    }

    pub fn load(&self) -> Real {
        Real::from_bits(self.0.load(Ordering::Relaxed))
    }

    pub fn store(&self, v: Real) {
        self.0.store(v.to_bits(), Ordering::Relaxed);
    }

    #[inline]
    pub fn fetch_add(&self, v: Real) -> Real {
        let mut cur = self.0.load(Ordering::Relaxed);
        loop {
            let new = (Real::from_bits(cur) + v).to_bits();
            match self.0.compare_exchange_weak(cur, new, Ordering::Relaxed, Ordering::Relaxed) {
                Ok(prev) => return Real::from_bits(prev),
                Err(actual) => cur = actual,
            }
        }
    }
}

#[derive(Debug)]
enum ScatterStore {
    Private(Vec<Vec<Real>>),
    Shared(Vec<AtomicReal>),
}

/// Concurrent accumulation target with `num_slots × num_lanes` entries.
///
/// Workers obtain a [`ScatterHandle`] each from [`ScatterBuffer::handles`]
/// and contribute through it; [`ScatterBuffer::reduce_into`] produces the
/// dense sums once all handles are dropped.
#[derive(Debug)]
pub struct ScatterBuffer {
    num_slots: usize,
    num_lanes: usize,
    backend: ScatterBackend,
    worker_count: usize,
    store: ScatterStore,
}

impl ScatterBuffer {
    pub fn new(num_slots: usize, num_lanes: usize, backend: ScatterBackend, worker_count: usize) -> Result<Self> {
        if worker_count == 0 {
            return Err(Error::usage("scatter buffer needs at least one worker"));
        }
        if backend == ScatterBackend::Sequential && worker_count != 1 {
            return Err(Error::usage("the Sequential scatter backend takes exactly one worker"));
        }
        let len = num_slots * num_lanes;
        let store = match backend {
            ScatterBackend::Replicated => ScatterStore::Private(vec![vec![0.0; len]; worker_count]),
            ScatterBackend::Sequential => ScatterStore::Private(vec![vec![0.0; len]]),
            ScatterBackend::SharedUpdate => ScatterStore::Shared((0..len).map(|_| AtomicReal::new(0.0)).collect()),
        };
        Ok(ScatterBuffer {
            num_slots,
            num_lanes,
            backend,
            worker_count,
            store,
        })
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn num_lanes(&self) -> usize {
        self.num_lanes
    }

    pub fn backend(&self) -> ScatterBackend {
        self.backend
    }

    pub fn worker_count(&self) -> usize {
        self.worker_count
    }

    pub fn clear(&mut self) {
        match &mut self.store {
            ScatterStore::Private(copies) => copies
                .par_iter_mut()
                .for_each(|c| c.iter_mut().for_each(|x| *x = 0.0)),
            ScatterStore::Shared(cells) => cells.par_iter().for_each(|c| c.store(0.0)),
        }
    }

    /// Records one contribution from `worker`. Single-threaded convenience
    /// entry point; concurrent callers use [`ScatterBuffer::handles`].
    pub fn contribute(&mut self, worker: usize, slot: usize, lane: usize, value: Real) -> Result<()> {
        if worker >= self.worker_count || slot >= self.num_slots || lane >= self.num_lanes {
            return Err(Error::usage(format!(
                "scatter index (worker {worker}, slot {slot}, lane {lane}) out of range \
                 ({} workers, {} slots, {} lanes)",
                self.worker_count, self.num_slots, self.num_lanes
            )));
        }
        let i = slot * self.num_lanes + lane;
        match &mut self.store {
            ScatterStore::Private(copies) => copies[worker][i] += value,
            ScatterStore::Shared(cells) => {
                cells[i].fetch_add(value);
            }
        }
        Ok(())
    }

    /// One handle per worker, in worker order. Handles may be sent to
    /// different threads.
    pub fn handles(&mut self) -> Vec<ScatterHandle<'_>> {
        let num_lanes = self.num_lanes;
        match &mut self.store {
            ScatterStore::Private(copies) => copies
                .iter_mut()
                .map(|c| ScatterHandle {
                    target: Target::Private(c),
                    num_lanes,
                })
                .collect(),
            ScatterStore::Shared(cells) => {
                let cells: &[AtomicReal] = cells;
                (0..self.worker_count)
                    .map(|_| ScatterHandle {
                        target: Target::Shared(cells),
                        num_lanes,
                    })
                    .collect()
            }
        }
    }

    /// A handle onto the shared cells of a [`ScatterBackend::SharedUpdate`]
    /// buffer; `None` for private-copy backends. Any number may coexist.
    pub fn shared_handle(&self) -> Option<ScatterHandle<'_>> {
        match &self.store {
            ScatterStore::Shared(cells) => Some(ScatterHandle {
                target: Target::Shared(cells),
                num_lanes: self.num_lanes,
            }),
            ScatterStore::Private(_) => None,
        }
    }

    /// Dense per-(slot, lane) sums.
    pub fn reduce(&self) -> Vec<Real> {
        let mut out = vec![0.0; self.num_slots * self.num_lanes];
        self.reduce_into(&mut out);
        out
    }

    pub fn reduce_into(&self, out: &mut [Real]) {
        assert_eq!(out.len(), self.num_slots * self.num_lanes);
        const BLOCK: usize = 4096;
        match &self.store {
            ScatterStore::Private(copies) => {
                out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
                    let start = b * BLOCK;
                    let end = start + chunk.len();
                    chunk.copy_from_slice(&copies[0][start..end]);
                    for copy in &copies[1..] {
                        for (o, v) in chunk.iter_mut().zip(&copy[start..end]) {
                            *o += *v;
                        }
                    }
                });
            }
            ScatterStore::Shared(cells) => {
                out.par_iter_mut().zip(cells.par_iter()).for_each(|(o, c)| *o = c.load());
            }
        }
    }
}

#[derive(Debug)]
enum Target<'a> {
    Private(&'a mut [Real]),
    Shared(&'a [AtomicReal]),
}

/// A worker's write access to a [`ScatterBuffer`].
#[derive(Debug)]
pub struct ScatterHandle<'a> {
    target: Target<'a>,
    num_lanes: usize,
}

impl ScatterHandle<'_> {
    pub fn num_lanes(&self) -> usize {
        self.num_lanes
    }

    pub fn num_slots(&self) -> usize {
        let len = match &self.target {
            Target::Private(data) => data.len(),
            Target::Shared(cells) => cells.len(),
        };
        len / self.num_lanes.max(1)
    }

    #[inline(always)]
    pub fn contribute(&mut self, slot: usize, lane: usize, value: Real) {
        debug_assert!(lane < self.num_lanes);
        let i = slot * self.num_lanes + lane;
        match &mut self.target {
            Target::Private(data) => data[i] += value,
            Target::Shared(cells) => {
                cells[i].fetch_add(value);
            }
        }
    }

    /// Adds `values` to consecutive lanes starting at `first_lane`.
    #[inline(always)]
    pub fn contribute_lanes(&mut self, slot: usize, first_lane: usize, values: &[Real]) {
        debug_assert!(first_lane + values.len() <= self.num_lanes);
        let base = slot * self.num_lanes + first_lane;
        match &mut self.target {
            Target::Private(data) => {
                for (d, v) in data[base..base + values.len()].iter_mut().zip(values) {
                    *d += *v;
                }
            }
            Target::Shared(cells) => {
                for (c, v) in cells[base..base + values.len()].iter().zip(values) {
                    c.fetch_add(*v);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn offsets_match_definition() {
        assert_eq!(linear_offset(2, 3, 4, 8, LayoutPolicy::RecordMajor).unwrap(), 19);
        assert_eq!(linear_offset(2, 3, 4, 8, LayoutPolicy::FieldMajor).unwrap(), 14);
        for p in LayoutPolicy::ALL {
            assert_eq!(linear_offset(0, 0, 5, 7, p).unwrap(), 0);
            assert!(linear_offset(5, 0, 5, 7, p).is_err());
            assert!(linear_offset(0, 7, 5, 7, p).is_err());
        }
    }

    #[test]
    fn offsets_are_a_bijection() {
        for n in 1..=64 {
            for f in 1..=64 {
                for p in LayoutPolicy::ALL {
                    let mut seen = vec![false; n * f];
                    for r in 0..n {
                        for c in 0..f {
                            let o = linear_offset(r, c, n, f, p).unwrap();
                            assert!(!seen[o]);
                            seen[o] = true;
                        }
                    }
                    assert!(seen.iter().all(|&s| s));
                }
            }
        }
    }

    #[test]
    fn copy_across_layouts_preserves_values() {
        let counter = CopyCounter::new();
        let mut src = FieldedBuffer::new(5, 4, LayoutPolicy::RecordMajor, SpaceTag::DEVICE);
        for i in 0..5 {
            for j in 0..4 {
                src.set(i, j, (i + j) as Real);
            }
        }
        let mut dst = FieldedBuffer::new(5, 4, LayoutPolicy::FieldMajor, SpaceTag::HOST);
        copy_between(&src, &mut dst, &counter).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                assert_eq!(dst.get(i, j), (i + j) as Real);
            }
        }
        assert_eq!(counter.count(), 1);
    }

    #[test]
    fn zero_copy_counts_once() {
        let counter = CopyCounter::new();
        let src = FieldedBuffer::new(3, 2, LayoutPolicy::FieldMajor, SpaceTag::DEVICE);
        let mut dst = FieldedBuffer::new(3, 2, LayoutPolicy::RecordMajor, SpaceTag::HOST);
        dst.fill(7.0);
        copy_between(&src, &mut dst, &counter).unwrap();
        assert!(dst.as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(counter.count(), 1);
    }

    #[test]
    fn copy_shape_mismatch_is_usage_error() {
        let counter = CopyCounter::new();
        let src = FieldedBuffer::new(3, 2, LayoutPolicy::FieldMajor, SpaceTag::DEVICE);
        let mut dst = FieldedBuffer::new(2, 3, LayoutPolicy::FieldMajor, SpaceTag::HOST);
        assert!(matches!(copy_between(&src, &mut dst, &counter), Err(Error::Usage(_))));
        assert_eq!(counter.count(), 0);
    }

    #[test]
    fn same_space_mirror_aliases_without_copies() {
        let counter = CopyCounter::new();
        let mut src = FieldedBuffer::new(4, 3, LayoutPolicy::FieldMajor, SpaceTag::HOST);
        src.set(1, 2, 5.0);
        let mut mirror = Mirror::of(&src, SpaceTag::HOST, LayoutPolicy::RecordMajor);
        assert!(mirror.is_alias());
        mirror.pull(&src, &counter).unwrap();
        mirror.push(&mut src, &counter).unwrap();
        assert_eq!(counter.count(), 0);
        assert_eq!(mirror.view(&src).get(1, 2), 5.0);
        mirror.view_mut(&mut src).set(0, 0, 1.0);
        assert_eq!(src.get(0, 0), 1.0);
    }

    #[test]
    fn cross_space_mirror_round_trips() {
        let counter = CopyCounter::new();
        let mut src = FieldedBuffer::new(4, 3, LayoutPolicy::FieldMajor, SpaceTag::DEVICE);
        src.set(3, 1, 2.5);
        let mut mirror = Mirror::of(&src, SpaceTag::HOST, LayoutPolicy::RecordMajor);
        assert!(!mirror.is_alias());
        mirror.pull(&src, &counter).unwrap();
        assert_eq!(mirror.view(&src).get(3, 1), 2.5);
        {
            let mut dummy = FieldedBuffer::new(0, 0, LayoutPolicy::FieldMajor, SpaceTag::DEVICE);
            mirror.view_mut(&mut dummy).set(3, 1, -1.0);
        }
        mirror.push(&mut src, &counter).unwrap();
        assert_eq!(src.get(3, 1), -1.0);
        assert_eq!(counter.count(), 2);
    }

    #[test]
    fn split_records_covers_every_record_once() {
        for p in LayoutPolicy::ALL {
            let mut buf = FieldedBuffer::new(10, 3, p, SpaceTag::DEVICE);
            {
                let mut parts = buf.split_records_mut(&[0, 3, 3, 7, 10]);
                assert_eq!(parts.iter().map(|p| p.len()).collect::<Vec<_>>(), vec![3, 0, 4, 3]);
                let mut base = 0;
                for part in parts.iter_mut() {
                    for r in 0..part.len() {
                        for f in 0..3 {
                            part.set(r, f, ((base + r) * 10 + f) as Real);
                        }
                    }
                    base += part.len();
                }
            }
            for r in 0..10 {
                for f in 0..3 {
                    assert_eq!(buf.get(r, f), (r * 10 + f) as Real);
                }
            }
        }
    }

    #[test]
    fn split_empty_buffer() {
        for p in LayoutPolicy::ALL {
            let mut buf = FieldedBuffer::new(0, 7, p, SpaceTag::DEVICE);
            let parts = buf.split_records_mut(&[0, 0, 0]);
            assert_eq!(parts.len(), 2);
            assert!(parts.iter().all(|p| p.is_empty()));
        }
    }

    #[test]
    fn scatter_small_sums() {
        for backend in ScatterBackend::ALL {
            let workers = if backend == ScatterBackend::Sequential { 1 } else { 2 };
            let mut sb = ScatterBuffer::new(2, 1, backend, workers).unwrap();
            assert!(sb.reduce().iter().all(|&x| x == 0.0));
            sb.contribute(0, 0, 0, 1.0).unwrap();
            sb.contribute(workers - 1, 0, 0, 2.0).unwrap();
            sb.contribute(0, 1, 0, 5.0).unwrap();
            assert_eq!(sb.reduce(), vec![3.0, 5.0]);
            sb.clear();
            assert_eq!(sb.reduce(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn replicated_two_workers_exact() {
        let mut sb = ScatterBuffer::new(1, 1, ScatterBackend::Replicated, 2).unwrap();
        sb.contribute(0, 0, 0, 1.0).unwrap();
        sb.contribute(1, 0, 0, 1.0).unwrap();
        assert_eq!(sb.reduce()[0], 2.0);
    }

    #[test]
    fn scatter_rejects_bad_indices() {
        let mut sb = ScatterBuffer::new(2, 12, ScatterBackend::Replicated, 2).unwrap();
        assert!(sb.contribute(2, 0, 0, 1.0).is_err());
        assert!(sb.contribute(0, 2, 0, 1.0).is_err());
        assert!(sb.contribute(0, 0, 12, 1.0).is_err());
        assert!(ScatterBuffer::new(2, 12, ScatterBackend::Sequential, 2).is_err());
        assert!(ScatterBuffer::new(2, 12, ScatterBackend::Replicated, 0).is_err());
    }

    #[test]
    fn handles_contribute_concurrently() {
        for backend in [ScatterBackend::Replicated, ScatterBackend::SharedUpdate] {
            let mut sb = ScatterBuffer::new(3, 2, backend, 4).unwrap();
            sb.handles().into_par_iter().for_each(|mut h| {
                for _ in 0..1000 {
                    h.contribute(1, 1, 1.0);
                    h.contribute_lanes(2, 0, &[0.5, 0.25]);
                }
            });
            assert_eq!(sb.reduce(), vec![0.0, 0.0, 0.0, 4000.0, 2000.0, 1000.0]);
        }
    }

    proptest! {
        #[test]
        fn layout_transparency(
            n in 1usize..20,
            f in 1usize..9,
            seed in any::<u64>(),
        ) {
            // same accessor-level algorithm on both layouts gives identical values
            let run = |p: LayoutPolicy| {
                let mut buf = FieldedBuffer::new(n, f, p, SpaceTag::DEVICE);
                let mut s = seed;
                for r in 0..n {
                    for c in 0..f {
                        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        buf.set(r, c, (s >> 11) as Real / (1u64 << 53) as Real);
                    }
                }
                for r in 0..n {
                    let acc: Real = (0..f).map(|c| buf.get(r, c)).sum();
                    buf.add(r, 0, acc);
                }
                (0..n).flat_map(|r| (0..f).map(move |c| (r, c))).map(|(r, c)| buf.get(r, c).to_bits()).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(LayoutPolicy::RecordMajor), run(LayoutPolicy::FieldMajor));
        }

        #[test]
        fn permutation_moves_whole_records(n in 1usize..30, rot in 0usize..30) {
            for p in LayoutPolicy::ALL {
                let mut buf = FieldedBuffer::new(n, 3, p, SpaceTag::DEVICE);
                for r in 0..n { for c in 0..3 { buf.set(r, c, (r * 3 + c) as Real); } }
                let order: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
                buf.permute_records(&order);
                for r in 0..n { for c in 0..3 {
                    prop_assert_eq!(buf.get(r, c), (order[r] * 3 + c) as Real);
                } }
            }
        }
    }
}
