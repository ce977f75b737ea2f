use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DirectedGraph;
use crate::error::Result;

/// On-disk graph: `{"vertices": [...], "edges": [{"id", "tail", "head"}, ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: String,
    pub tail: String,
    pub head: String,
}

impl GraphFile {
    pub fn into_graph(self) -> Result<DirectedGraph> {
        DirectedGraph::new(
            self.vertices,
            self.edges.into_iter().map(|e| (e.id, e.tail, e.head)),
        )
    }
}

impl From<&DirectedGraph> for GraphFile {
    fn from(g: &DirectedGraph) -> Self {
        Self {
            vertices: g.vertex_ids().to_vec(),
            edges: g
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    id: e.id.clone(),
                    tail: g.vertex_id(e.tail).to_string(),
                    head: g.vertex_id(e.head).to_string(),
                })
                .collect(),
        }
    }
}

impl DirectedGraph {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<GraphFile>(text)?.into_graph()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphFile::from(self)).expect("graph serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
