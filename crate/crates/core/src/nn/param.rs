//! Named parameter storage with group tags, and the per-step session that binds parameters to a graph.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::nn::graph::{Graph, Var};
use crate::nn::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    /// Optimized by gradient descent.
    Weight,
    /// Updated outside the optimizer (batch-norm running statistics).
    Buffer,
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub group: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `group.name`; panics on a duplicate name since that is a model-construction bug.
    pub fn add(&mut self, group: &str, name: &str, kind: ParamKind, value: Tensor) -> ParamId {
        let full = format!("{group}.{name}");
        assert!(
            !self.index.contains_key(&full),
            "duplicate parameter {full}"
        );
        let id = ParamId(self.params.len());
        self.index.insert(full.clone(), id);
        self.params.push(Param {
            name: full,
            group: group.to_string(),
            kind,
            value,
        });
        id
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn groups(&self) -> BTreeSet<String> {
        self.params.iter().map(|p| p.group.clone()).collect()
    }

    /// Total number of scalar weights (buffers excluded).
    pub fn weight_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.kind == ParamKind::Weight)
            .map(|p| p.value.len())
            .sum()
    }

    /// Bit patterns of every value in the listed groups, for exact freeze comparisons.
    pub fn snapshot_bits(&self, groups: &BTreeSet<String>) -> Vec<(String, Vec<u32>)> {
        self.params
            .iter()
            .filter(|p| groups.contains(&p.group))
            .map(|p| {
                (
                    p.name.clone(),
                    p.value.data().iter().map(|v| v.to_bits()).collect(),
                )
            })
            .collect()
    }
}

/// One forward/backward pass: parameters become graph leaves on first use.
pub struct Session<'a> {
    pub graph: Graph,
    store: &'a ParamStore,
    learnable: BTreeSet<String>,
    train: bool,
    vars: HashMap<ParamId, Var>,
    buffer_updates: Vec<(ParamId, Tensor)>,
}

impl<'a> Session<'a> {
    /// `train` selects batch statistics for normalization layers in learnable groups.
    pub fn new(store: &'a ParamStore, learnable: BTreeSet<String>, train: bool) -> Self {
        Self {
            graph: Graph::new(),
            store,
            learnable,
            train,
            vars: HashMap::new(),
            buffer_updates: Vec::new(),
        }
    }

    /// Inference session: nothing learnable, no tape retained.
    pub fn inference(store: &'a ParamStore) -> Self {
        Self::new(store, BTreeSet::new(), false)
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn is_learnable(&self, id: ParamId) -> bool {
        let p = self.store.get(id);
        p.kind == ParamKind::Weight && self.learnable.contains(&p.group)
    }

    /// Whether layers of this parameter's group run in training mode.
    pub fn training(&self, id: ParamId) -> bool {
        self.train && self.learnable.contains(&self.store.get(id).group)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.vars.get(&id) {
            return *v;
        }
        let rg = self.is_learnable(id);
        let v = self
            .graph
            .param_leaf(self.store.get(id).value.clone(), id, rg);
        self.vars.insert(id, v);
        v
    }

    pub fn buffer(&self, id: ParamId) -> &Tensor {
        &self.store.get(id).value
    }

    pub fn push_buffer_update(&mut self, id: ParamId, value: Tensor) {
        self.buffer_updates.push((id, value));
    }

    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Tensor)> {
        std::mem::take(&mut self.buffer_updates)
    }
}
