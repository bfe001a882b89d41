use rand::Rng;

use crate::diffcore::Mat;
use crate::error::{Result, XqcError};

/// One environment transition; `r` is the raw reward and `done` marks true
/// termination only.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s2: Vec<f64>,
    pub done: bool,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        let finite = self.s.iter().chain(&self.a).chain(&self.s2).all(|v| v.is_finite()) && self.r.is_finite();
        if !finite {
            return Err(XqcError::NonFinite("transition".into()));
        }
        if self.a.iter().any(|a| a.abs() > 1.0) {
            return Err(XqcError::Precondition("action outside [-1, 1]".into()));
        }
        Ok(())
    }
}

/// Column-stacked minibatch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub s: Mat<f64>,
    pub a: Mat<f64>,
    pub r: Vec<f64>,
    pub s2: Mat<f64>,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Self {
        let n = ts.len();
        let (od, ad) = (ts[0].s.len(), ts[0].a.len());
        let mut s = Mat::zeros(n, od);
        let mut a = Mat::zeros(n, ad);
        let mut s2 = Mat::zeros(n, od);
        for (i, t) in ts.iter().enumerate() {
            s.row_mut(i).copy_from_slice(&t.s);
            a.row_mut(i).copy_from_slice(&t.a);
            s2.row_mut(i).copy_from_slice(&t.s2);
        }
        Batch {
            s,
            a,
            r: ts.iter().map(|t| t.r).collect(),
            s2,
            done: ts.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// FIFO ring buffer with uniform sampling over the filled region.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            data: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    pub fn sample_indices<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.data.len())).collect()
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if self.data.is_empty() {
            return Err(XqcError::Precondition("sampling from an empty buffer".into()));
        }
        let idx = self.sample_indices(n, rng);
        let ts: Vec<&Transition> = idx.iter().map(|&i| &self.data[i]).collect();
        Ok(Batch::from_transitions(&ts))
    }
}
