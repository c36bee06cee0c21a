#![allow(dead_code)]

pub mod lp;

use std::path::PathBuf;

use tbcover::graph::Graph;
use tbcover::net::{parse_net, Net};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn load_net(name: &str) -> Net {
    let text = std::fs::read_to_string(fixture_path(name)).unwrap();
    parse_net(&text).unwrap()
}

/// Predicate text pinning every place count of node `id`.
pub fn marking_predicate(g: &Graph, id: usize) -> String {
    g.places
        .iter()
        .zip(g.nodes[id].state.counts())
        .map(|(p, k)| format!("#{p} = {k}"))
        .collect::<Vec<_>>()
        .join(" && ")
}
