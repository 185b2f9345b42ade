//! Parameter grids and the flat combo registry the selection network indexes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{CommonParams, DetectorConfig, DetectorKind, REGISTRY_VERSION};

/// Candidate values per parameter of one detector, and their cross product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct ParamGrid {
    kind: DetectorKind,
    axes: Vec<(String, Vec<f64>)>,
    common: CommonParams,
    combos: Vec<DetectorConfig>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    kind: DetectorKind,
    axes: Vec<(String, Vec<f64>)>,
    common: CommonParams,
}

impl TryFrom<GridRepr> for ParamGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        ParamGrid::new(r.kind, r.axes, r.common)
    }
}

impl From<ParamGrid> for GridRepr {
    fn from(g: ParamGrid) -> Self {
        GridRepr {
            kind: g.kind,
            axes: g.axes,
            common: g.common,
        }
    }
}

impl ParamGrid {
    /// Axes are reordered to the kind's schema order; the cross product is
    /// materialized with the first axis varying slowest.
    pub fn new(kind: DetectorKind, axes: Vec<(String, Vec<f64>)>, common: CommonParams) -> Result<Self> {
        let schema_err = |reason: String| Error::Schema {
            kind: kind.name().to_string(),
            reason,
        };
        let mut by_name: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (name, values) in axes {
            if !kind.schema().iter().any(|p| p.name == name) {
                return Err(schema_err(format!("unknown axis `{name}`")));
            }
            if values.is_empty() {
                return Err(schema_err(format!("axis `{name}` has no values")));
            }
            if by_name.insert(name.clone(), values).is_some() {
                return Err(schema_err(format!("axis `{name}` given twice")));
            }
        }
        let mut ordered = Vec::new();
        for spec in kind.schema() {
            let values = by_name
                .remove(spec.name)
                .ok_or_else(|| schema_err(format!("missing axis `{}`", spec.name)))?;
            ordered.push((spec.name.to_string(), values));
        }
        let mut combos = vec![Vec::<(String, f64)>::new()];
        for (name, values) in &ordered {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut next = prefix.clone();
                        next.push((name.clone(), v));
                        next
                    })
                })
                .collect();
        }
        let combos = combos
            .into_iter()
            .map(|params| {
                let c = DetectorConfig {
                    kind,
                    params: params.into_iter().collect(),
                    common,
                };
                c.validate().map(|_| c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamGrid {
            kind,
            axes: ordered,
            common,
            combos,
        })
    }

    fn from_static(kind: DetectorKind, axes: &[(&str, &[f64])]) -> Self {
        let axes = axes.iter().map(|(n, v)| (n.to_string(), v.to_vec())).collect();
        Self::new(kind, axes, CommonParams::default()).expect("built-in grid is valid")
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn axes(&self) -> &[(String, Vec<f64>)] {
        &self.axes
    }

    pub fn common(&self) -> CommonParams {
        self.common
    }

    pub fn combos(&self) -> &[DetectorConfig] {
        &self.combos
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }

    /// Smallest window the grid can run on.
    pub fn min_window(&self) -> usize {
        match self.kind {
            DetectorKind::StlResidual => self
                .combos
                .iter()
                .map(|c| 2 * c.params["period"] as usize)
                .max()
                .unwrap_or(1),
            DetectorKind::LofOutlier => self.combos.iter().map(|c| c.params["k"] as usize + 1).max().unwrap_or(1),
            _ => 1,
        }
    }
}

/// The five-detector, 29-combination default.
pub fn default_grid() -> Vec<ParamGrid> {
    use DetectorKind::*;
    vec![
        ParamGrid::from_static(KSigma, &[("k", &[2.0, 2.5, 3.0, 3.5, 4.0])]),
        ParamGrid::from_static(DbscanOutlier, &[("eps", &[0.3, 0.5, 0.8]), ("min_pts", &[3.0, 5.0])]),
        ParamGrid::from_static(CusumChangePoint, &[("h", &[4.0, 5.0]), ("drift", &[0.0, 0.25, 0.5])]),
        ParamGrid::from_static(StlResidual, &[("residual_k", &[2.0, 3.0]), ("period", &[12.0, 24.0, 48.0])]),
        ParamGrid::from_static(DtwShape, &[("radius", &[5.0, 10.0]), ("dist_threshold", &[1.0, 2.0, 3.0])]),
    ]
}

/// Grids for all eight pool members, in registry order.
pub fn full_grid() -> Vec<ParamGrid> {
    use DetectorKind::*;
    let mut d = default_grid().into_iter();
    let ksigma = d.next().unwrap();
    let dbscan = d.next().unwrap();
    let cusum = d.next().unwrap();
    let stl = d.next().unwrap();
    let dtw = d.next().unwrap();
    vec![
        ksigma,
        ParamGrid::from_static(SimpleThreshold, &[("upper", &[2.0, 3.0]), ("lower", &[-3.0, -2.0])]),
        dbscan,
        ParamGrid::from_static(LofOutlier, &[("k", &[5.0, 10.0]), ("lof_threshold", &[1.5, 2.0, 3.0])]),
        ParamGrid::from_static(
            KernelDensity,
            &[("bandwidth", &[0.2, 0.5]), ("density_quantile", &[0.005, 0.02]), ("mode", &[0.0, 1.0])],
        ),
        cusum,
        stl,
        dtw,
    ]
}

/// An ordered set of grids. Class `c` of the selection network is grid `c`;
/// parameter label `p` is combo `p` inside it. Flat combo indices run over
/// all grids in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSet {
    grids: Vec<ParamGrid>,
}

impl Default for GridSet {
    fn default() -> Self {
        GridSet { grids: default_grid() }
    }
}

impl GridSet {
    pub fn new(grids: Vec<ParamGrid>) -> Result<Self> {
        if grids.is_empty() {
            return Err(Error::Empty("grid set has no detectors".into()));
        }
        for (i, g) in grids.iter().enumerate() {
            if grids[..i].iter().any(|o| o.kind == g.kind) {
                return Err(Error::Schema {
                    kind: g.kind.name().into(),
                    reason: "detector listed twice".into(),
                });
            }
        }
        Ok(GridSet { grids })
    }

    pub fn full() -> Self {
        GridSet { grids: full_grid() }
    }

    pub fn grids(&self) -> &[ParamGrid] {
        &self.grids
    }

    pub fn grid(&self, class: usize) -> &ParamGrid {
        &self.grids[class]
    }

    pub fn num_detectors(&self) -> usize {
        self.grids.len()
    }

    /// Combo count per detector class.
    pub fn widths(&self) -> Vec<usize> {
        self.grids.iter().map(ParamGrid::len).collect()
    }

    pub fn max_width(&self) -> usize {
        self.widths().into_iter().max().unwrap_or(0)
    }

    pub fn total_combos(&self) -> usize {
        self.grids.iter().map(ParamGrid::len).sum()
    }

    pub fn min_window(&self) -> usize {
        self.grids.iter().map(ParamGrid::min_window).max().unwrap_or(1)
    }

    pub fn class_of(&self, kind: DetectorKind) -> Option<usize> {
        self.grids.iter().position(|g| g.kind == kind)
    }

    pub fn flat_index(&self, class: usize, param: usize) -> usize {
        self.grids[..class].iter().map(ParamGrid::len).sum::<usize>() + param
    }

    /// `(detector class, parameter index)` of a flat combo index.
    pub fn locate(&self, flat: usize) -> Option<(usize, usize)> {
        let mut rest = flat;
        for (c, g) in self.grids.iter().enumerate() {
            if rest < g.len() {
                return Some((c, rest));
            }
            rest -= g.len();
        }
        None
    }

    pub fn config(&self, class: usize, param: usize) -> &DetectorConfig {
        &self.grids[class].combos[param]
    }

    /// `(flat index, class, parameter index, config)` in flat order.
    pub fn iter_combos(&self) -> impl Iterator<Item = (usize, usize, usize, &DetectorConfig)> {
        self.grids
            .iter()
            .enumerate()
            .flat_map(|(c, g)| g.combos.iter().enumerate().map(move |(p, cfg)| (c, p, cfg)))
            .enumerate()
            .map(|(flat, (c, p, cfg))| (flat, c, p, cfg))
    }

    /// SHA-256 over the registry version and the canonical grid JSON.
    pub fn fingerprint(&self) -> String {
        let body = serde_json::to_string(&self.grids).expect("grids serialize");
        let mut h = Sha256::new();
        h.update(format!("registry-v{REGISTRY_VERSION}\n").as_bytes());
        h.update(body.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses a grid override document:
    ///
    /// ```json
    /// { "common": {"history_count": 3, "sensitivity": 1.0},
    ///   "ksigma": {"k": [2, 3]},
    ///   "cusum_change_point": {"h": [4, 5], "drift": [0, 0.5]} }
    /// ```
    ///
    /// Detectors appear in registry order regardless of key order. Every
    /// problem found is reported, not just the first.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)?;
        let obj = doc.as_object().ok_or_else(|| Error::Config {
            problems: vec!["grid document must be a JSON object".into()],
        })?;
        let mut problems = Vec::new();
        let mut common = CommonParams::default();
        if let Some(c) = obj.get("common") {
            match serde_json::from_value::<CommonParams>(c.clone()) {
                Ok(c) => match c.validate() {
                    Ok(()) => common = c,
                    Err(e) => problems.push(format!("common: {e}")),
                },
                Err(e) => problems.push(format!("common: {e}")),
            }
        }
        for key in obj.keys() {
            if key != "common" && DetectorKind::from_name(key).is_none() {
                problems.push(format!("unknown detector `{key}`"));
            }
        }
        let mut grids = Vec::new();
        for kind in DetectorKind::ALL {
            let Some(spec) = obj.get(kind.name()) else { continue };
            let Some(axes_obj) = spec.as_object() else {
                problems.push(format!("{}: expected an object of axes", kind.name()));
                continue;
            };
            let mut axes = Vec::new();
            for (name, values) in axes_obj {
                match serde_json::from_value::<Vec<f64>>(values.clone()) {
                    Ok(v) => axes.push((name.clone(), v)),
                    Err(_) => problems.push(format!("{}.{name}: expected an array of numbers", kind.name())),
                }
            }
            match ParamGrid::new(kind, axes, common) {
                Ok(g) => grids.push(g),
                Err(e) => problems.push(format!("{}: {e}", kind.name())),
            }
        }
        if grids.is_empty() && problems.is_empty() {
            problems.push("no detectors listed".into());
        }
        if !problems.is_empty() {
            return Err(Error::Config { problems });
        }
        GridSet::new(grids)
    }

    /// Inverse of [`GridSet::from_json`] (common parameters of the first grid).
    pub fn to_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        obj.insert("common".into(), serde_json::to_value(self.grids[0].common).unwrap());
        for g in &self.grids {
            let axes: serde_json::Map<String, Value> = g
                .axes
                .iter()
                .map(|(n, v)| (n.clone(), serde_json::to_value(v).unwrap()))
                .collect();
            obj.insert(g.kind.name().into(), Value::Object(axes));
        }
        serde_json::to_string_pretty(&Value::Object(obj)).unwrap()
    }
}
