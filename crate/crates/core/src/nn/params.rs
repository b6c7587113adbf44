use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Named parameter tensors in creation order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn from_entries(entries: Vec<ParamEntry<T>>) -> Self {
        Self { entries }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.entries[id.0].data
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.entries[id.0].data
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    data: e.data.iter().map(|v| U::of(v.f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.data.iter().all(|v| v.is_finite()))
    }
}

/// Gradient buffers parallel to a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    data: Vec<Vec<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(ps: &ParamSet<T>) -> Self {
        Self {
            data: ps
                .entries()
                .iter()
                .map(|e| vec![T::zero(); e.data.len()])
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.data[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.data[id.0]
    }

    pub fn by_index(&self, i: usize) -> &[T] {
        &self.data[i]
    }

    pub fn zero(&mut self) {
        for g in &mut self.data {
            g.fill(T::zero());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-bound, bound)`.
    Uniform(f64),
    /// Identity matrix; the shape must be square `[n, n]`.
    Identity,
}

/// Allocates parameters with a seeded initializer. Values are drawn in
/// `f64` and then cast, so builds at different precisions agree up to
/// rounding.
pub struct ParamBuilder<T> {
    set: ParamSet<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> ParamBuilder<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            set: ParamSet::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> ParamId {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
            Init::Uniform(bound) => (0..n)
                .map(|_| T::of(self.rng.gen_range(-bound..bound)))
                .collect(),
            Init::Identity => {
                assert!(shape.len() == 2 && shape[0] == shape[1], "identity init needs a square shape");
                (0..n)
                    .map(|i| if i / shape[1] == i % shape[1] { T::one() } else { T::zero() })
                    .collect()
            }
        };
        let name = name.into();
        debug_assert!(self.set.find(&name).is_none(), "duplicate parameter {name}");
        self.set.entries.push(ParamEntry {
            name,
            shape: shape.to_vec(),
            data,
        });
        ParamId(self.set.entries.len() - 1)
    }

    pub fn finish(self) -> ParamSet<T> {
        self.set
    }
}
