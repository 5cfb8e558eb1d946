//! Dataset files and CSV outputs.
//!
//! * edges: one `src<TAB>dst` pair per line, 0-based ids, `#` comments
//! * features: CSV `id,f0,f1,...`
//! * labels: CSV `id,label`
//! * splits: CSV `id,split` with split one of `train`, `val`, `test`
//!
//! Header rows are optional on input: a first record whose id column is
//! not an integer is skipped.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::stratified_split;
use crate::dense::Matrix;
use crate::error::{GreadError, Result};
use crate::graph::{largest_connected_component, LabeledGraph, SparseGraph, Split};

pub const EDGE_FILE: &str = "edges.tsv";
pub const FEATURE_FILE: &str = "features.csv";
pub const LABEL_FILE: &str = "labels.csv";
pub const SPLIT_FILE: &str = "splits.csv";

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| GreadError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| GreadError::io(path, e))
}

fn parse_err(path: &Path, line: u64, msg: impl std::fmt::Display) -> GreadError {
    GreadError::data(format!("{}:{line}: {msg}", path.display()))
}

fn records(path: &Path, delimiter: u8) -> Result<Vec<(u64, StringRecord)>> {
    let mut rdr = ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(Trim::All)
        .from_reader(open(path)?);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| GreadError::data(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(k as u64 + 1, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec));
    }
    if let Some((_, first)) = out.first() {
        if first.get(0).is_some_and(|f| f.parse::<usize>().is_err()) {
            out.remove(0);
        }
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &StringRecord, k: usize) -> Result<T> {
    let raw = rec
        .get(k)
        .ok_or_else(|| parse_err(path, line, format!("missing column {k}")))?;
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {raw:?}")))
}

/// Undirected edge list; the node count is not known to this reader.
pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| GreadError::io(path, e))?;
    let mut edges = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut next = || -> Result<usize> {
            let tok = it
                .next()
                .ok_or_else(|| parse_err(path, k as u64 + 1, "expected two node ids"))?;
            tok.parse()
                .map_err(|_| parse_err(path, k as u64 + 1, format!("bad node id {tok:?}")))
        };
        let (a, b) = (next()?, next()?);
        edges.push((a, b));
    }
    Ok(edges)
}

/// Feature rows indexed by node id; ids must cover `0..n` exactly once.
pub fn read_features(path: &Path) -> Result<Matrix> {
    let recs = records(path, b',')?;
    let n = recs.len();
    let width = recs.first().map_or(0, |(_, r)| r.len().saturating_sub(1));
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    for (line, rec) in &recs {
        let id: usize = field(path, *line, rec, 0)?;
        if id >= n {
            return Err(parse_err(path, *line, format!("node id {id} outside 0..{n}")));
        }
        if rec.len() - 1 != width {
            return Err(parse_err(path, *line, format!("expected {width} features")));
        }
        if rows[id].is_some() {
            return Err(parse_err(path, *line, format!("duplicate node id {id}")));
        }
        rows[id] = Some((1..rec.len()).map(|k| field(path, *line, rec, k)).collect::<Result<_>>()?);
    }
    let data: Vec<f64> = rows.into_iter().flatten().flatten().collect();
    Matrix::from_vec(n, width, data)
}

pub fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let mut labels = vec![None; n];
    for (line, rec) in records(path, b',')? {
        let id: usize = field(path, line, &rec, 0)?;
        let label: usize = field(path, line, &rec, 1)?;
        if id >= n {
            return Err(parse_err(path, line, format!("dangling node id {id}")));
        }
        labels[id] = Some(label);
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| GreadError::data(format!("node {i} has no label"))))
        .collect()
}

pub fn read_splits(path: &Path, n: usize) -> Result<Split> {
    let mut split = Split::empty(n);
    for (line, rec) in records(path, b',')? {
        let id: usize = field(path, line, &rec, 0)?;
        if id >= n {
            return Err(parse_err(path, line, format!("dangling node id {id}")));
        }
        let name: String = field(path, line, &rec, 1)?;
        let mask = match name.as_str() {
            "train" => &mut split.train,
            "val" => &mut split.val,
            "test" => &mut split.test,
            other => return Err(parse_err(path, line, format!("unknown split {other:?}"))),
        };
        mask[id] = true;
    }
    for i in 0..n {
        if [split.train[i], split.val[i], split.test[i]].iter().filter(|&&b| b).count() > 1 {
            return Err(GreadError::data(format!("node {i} appears in more than one split")));
        }
    }
    Ok(split)
}

/// Paths of the four dataset files.
#[derive(Clone, Debug)]
pub struct DatasetPaths {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    /// Without a split file a stratified 60/20/20 split with seed 0 is drawn.
    pub splits: Option<PathBuf>,
}

impl DatasetPaths {
    /// The standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> DatasetPaths {
        let splits = dir.join(SPLIT_FILE);
        DatasetPaths {
            edges: dir.join(EDGE_FILE),
            features: dir.join(FEATURE_FILE),
            labels: dir.join(LABEL_FILE),
            splits: splits.exists().then_some(splits),
        }
    }
}

pub fn load_dataset(paths: &DatasetPaths, lcc: bool) -> Result<LabeledGraph> {
    let features = read_features(&paths.features)?;
    let n = features.rows();
    let edges = read_edges(&paths.edges)?;
    if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
        return Err(GreadError::data(format!(
            "{}: edge ({a}, {b}) references a node without features",
            paths.edges.display()
        )));
    }
    let graph = SparseGraph::from_edges(n, &edges)?;
    let labels = read_labels(&paths.labels, n)?;
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let split = match &paths.splits {
        Some(p) => read_splits(p, n)?,
        None => stratified_split(&labels, n_classes, &mut ChaCha8Rng::seed_from_u64(0)),
    };
    let data = LabeledGraph::new(graph, features, labels, n_classes, split)?;
    Ok(if lcc { largest_connected_component(&data) } else { data })
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| GreadError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> GreadError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => GreadError::io(path, io),
        other => GreadError::data(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `header` then `rows` as CSV.
pub fn write_csv<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| GreadError::io(path, e))
}

/// Column names from string literals.
pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Writes the four dataset files into `dir`, which must exist.
pub fn write_dataset(dir: &Path, data: &LabeledGraph) -> Result<()> {
    let path = dir.join(EDGE_FILE);
    let mut w = create(&path)?;
    for (a, b) in data.graph.edge_list() {
        writeln!(w, "{a}\t{b}").map_err(|e| GreadError::io(&path, e))?;
    }
    finish(&path, w)?;

    let mut cols = vec!["id".to_string()];
    cols.extend((0..data.n_features()).map(|k| format!("f{k}")));
    write_csv(
        &dir.join(FEATURE_FILE),
        &cols,
        (0..data.n_nodes()).map(|i| {
            std::iter::once(i.to_string()).chain(data.features.row(i).iter().map(f64::to_string))
        }),
    )?;
    write_csv(
        &dir.join(LABEL_FILE),
        &header(&["id", "label"]),
        data.labels.iter().enumerate().map(|(i, l)| [i.to_string(), l.to_string()]),
    )?;
    let s = &data.split;
    write_csv(
        &dir.join(SPLIT_FILE),
        &header(&["id", "split"]),
        (0..data.n_nodes()).filter_map(|i| {
            let name = if s.train[i] {
                "train"
            } else if s.val[i] {
                "val"
            } else if s.test[i] {
                "test"
            } else {
                return None;
            };
            Some([i.to_string(), name.to_string()])
        }),
    )
}
