use std::fs;
use std::path::Path;

use gread::datagen::{generate_csbm, CsbmConfig};
use gread::graph::{homophily_ratio, LabeledGraph, SparseGraph, Split};
use gread::io::{load_dataset, write_dataset, DatasetPaths};
use gread::Matrix;

fn write(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

fn three_node(dir: &Path) {
    write(dir, "edges.tsv", "# toy\n0\t1\n1\t2\n2\t1\n");
    write(dir, "features.csv", "id,f0,f1\n2,0.5,-1\n0,1,0\n1,0,1\n");
    write(dir, "labels.csv", "id,label\n0,0\n1,1\n2,0\n");
    write(dir, "splits.csv", "id,split\n0,train\n1,val\n2,test\n");
}

#[test]
fn three_node_fixture_loads_exactly() {
    let dir = tempfile::tempdir().unwrap();
    three_node(dir.path());
    let d = load_dataset(&DatasetPaths::in_dir(dir.path()), false).unwrap();
    let expected = LabeledGraph::new(
        SparseGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap(),
        Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.5, -1.0]]),
        vec![0, 1, 0],
        2,
        Split {
            train: vec![true, false, false],
            val: vec![false, true, false],
            test: vec![false, false, true],
        },
    )
    .unwrap();
    assert_eq!(d, expected);
}

#[test]
fn overlapping_splits_name_the_node() {
    let dir = tempfile::tempdir().unwrap();
    three_node(dir.path());
    write(dir.path(), "splits.csv", "0,train\n1,val\n1,test\n");
    let err = load_dataset(&DatasetPaths::in_dir(dir.path()), false).unwrap_err();
    assert!(err.to_string().contains("node 1"), "{err}");
}

#[test]
fn bad_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    three_node(dir.path());
    write(dir.path(), "edges.tsv", "0\t5\n");
    assert!(load_dataset(&DatasetPaths::in_dir(dir.path()), false).is_err());

    three_node(dir.path());
    write(dir.path(), "labels.csv", "0,0\n2,1\n");
    let err = load_dataset(&DatasetPaths::in_dir(dir.path()), false).unwrap_err();
    assert!(err.to_string().contains("node 1 has no label"), "{err}");

    three_node(dir.path());
    write(dir.path(), "splits.csv", "0,holdout\n");
    assert!(load_dataset(&DatasetPaths::in_dir(dir.path()), false).is_err());
}

#[test]
fn generated_data_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = generate_csbm(&CsbmConfig { seed: 2, ..Default::default() }).unwrap();
    write_dataset(dir.path(), &d).unwrap();
    let back = load_dataset(&DatasetPaths::in_dir(dir.path()), false).unwrap();
    assert_eq!(back, d);
}

#[test]
fn lcc_reduction_on_load() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "edges.tsv", "0\t1\n1\t2\n3\t4\n");
    write(dir.path(), "features.csv", "0,0\n1,1\n2,2\n3,3\n4,4\n");
    write(dir.path(), "labels.csv", "0,0\n1,1\n2,0\n3,1\n4,1\n");
    let d = load_dataset(&DatasetPaths::in_dir(dir.path()), true).unwrap();
    assert_eq!(d.n_nodes(), 3);
    assert_eq!(d.features.as_slice(), &[0.0, 1.0, 2.0]);
}

/// Runs only when `GREAD_CORA_DIR` points at Cora-format files.
#[test]
fn cora_statistics_when_available() {
    let Some(dir) = std::env::var_os("GREAD_CORA_DIR") else {
        return;
    };
    let d = load_dataset(&DatasetPaths::in_dir(Path::new(&dir)), false).unwrap();
    assert_eq!(d.n_nodes(), 2708);
    assert_eq!(d.graph.n_undirected_edges(), 5278);
    assert!((homophily_ratio(&d).unwrap() - 0.81).abs() <= 0.005);
}
