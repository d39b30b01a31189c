//! Network-wide prune plans with channel propagation and MAC/parameter
//! accounting.
//!
//! Removing filter `j` of a conv layer removes output feature map `j`, and
//! with it input channel `j` of the next conv layer in the chain.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PruneError, Result};
use crate::fsutil::write_atomic;
use crate::tensor_io::{LayerKind, NetworkManifest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub name: String,
    pub kind: LayerKind,
    /// Kept filters, 1-based ascending; `None` for dense layers.
    pub keep_indices: Option<Vec<usize>>,
    pub mask: Option<Vec<bool>>,
    pub in_channels_before: usize,
    pub in_channels_after: usize,
    pub out_channels_before: usize,
    pub out_channels_after: usize,
    /// `None` when the manifest lacks the output spatial size.
    pub macs_before: Option<u64>,
    pub macs_after: Option<u64>,
    pub params_before: u64,
    pub params_after: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTotals {
    pub macs_before: u64,
    pub macs_after: u64,
    pub params_before: u64,
    pub params_after: u64,
    /// False when some layer's MACs could not be computed and are missing
    /// from the MAC totals.
    pub macs_complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunePlan {
    pub layers: Vec<LayerPlan>,
    pub totals: PlanTotals,
    pub index_base: u8,
}

/// Channel bookkeeping carried from the most recent weighted layer.
#[derive(Clone, Copy)]
struct Upstream {
    before: usize,
    after: usize,
    from_conv: bool,
}

/// Build a plan from per-conv-layer keep sets (0-based filter indices).
pub fn build_plan(
    manifest: &NetworkManifest,
    keeps: &HashMap<String, Vec<usize>>,
) -> Result<PrunePlan> {
    if manifest.layers.is_empty() {
        return Err(PruneError::Manifest("empty manifest: nothing to plan".into()));
    }
    if manifest.conv_layers().next().is_none() {
        return Err(PruneError::Manifest(
            "manifest has no conv2d layers: nothing to plan".into(),
        ));
    }
    for name in keeps.keys() {
        if !manifest
            .conv_layers()
            .any(|l| &l.name == name)
        {
            return Err(PruneError::Manifest(format!(
                "keep set given for unknown conv layer '{name}'"
            )));
        }
    }

    let mut layers = Vec::new();
    let mut upstream: Option<Upstream> = None;
    let mut last_conv: Option<(String, usize, usize)> = None;
    for entry in &manifest.layers {
        match entry.kind {
            LayerKind::Other => {}
            LayerKind::Conv2d => {
                let [kw, kh] = entry.kernel.expect("validated manifest");
                let n = entry.out_channels;
                let keep = keeps.get(&entry.name).ok_or_else(|| {
                    PruneError::Manifest(format!("no keep set for conv layer '{}'", entry.name))
                })?;
                let keep: BTreeSet<usize> = keep.iter().copied().collect();
                if keep.is_empty() {
                    return Err(PruneError::InvalidArgument(format!(
                        "empty keep set for layer '{}'",
                        entry.name
                    )));
                }
                if let Some(&bad) = keep.iter().find(|&&i| i >= n) {
                    return Err(PruneError::InvalidArgument(format!(
                        "keep index {} out of range 1..={n} for layer '{}'",
                        bad + 1,
                        entry.name
                    )));
                }
                let in_before = entry.in_channels;
                let in_after = match upstream {
                    Some(up) if up.from_conv && !entry.channel_change => up.after,
                    _ => in_before,
                };
                let kept = keep.len();
                let per_filter = |c_in: usize| (kw * kh * c_in) as u64;
                let bias = |out: usize| if entry.bias { out as u64 } else { 0 };
                let params_before = per_filter(in_before) * n as u64 + bias(n);
                let params_after = per_filter(in_after) * kept as u64 + bias(kept);
                let spatial = entry.out_spatial.map(|[h, w]| (h * w) as u64);
                let macs_before = spatial.map(|s| per_filter(in_before) * n as u64 * s);
                let macs_after = spatial.map(|s| per_filter(in_after) * kept as u64 * s);

                let mask = (0..n).map(|i| keep.contains(&i)).collect();
                layers.push(LayerPlan {
                    name: entry.name.clone(),
                    kind: entry.kind,
                    keep_indices: Some(keep.iter().map(|i| i + 1).collect()),
                    mask: Some(mask),
                    in_channels_before: in_before,
                    in_channels_after: in_after,
                    out_channels_before: n,
                    out_channels_after: kept,
                    macs_before,
                    macs_after,
                    params_before,
                    params_after,
                });
                upstream = Some(Upstream {
                    before: n,
                    after: kept,
                    from_conv: true,
                });
                last_conv = Some((entry.name.clone(), n, kept));
            }
            LayerKind::Dense => {
                let in_before = entry.in_channels;
                let in_after = match upstream {
                    Some(up) if up.from_conv => {
                        if in_before % up.before != 0 {
                            let (conv, n, _) = last_conv.clone().expect("set with upstream");
                            return Err(PruneError::Manifest(format!(
                                "dense layer '{}' has {in_before} inputs, not a multiple of the {n} filters of '{conv}'",
                                entry.name
                            )));
                        }
                        in_before / up.before * up.after
                    }
                    _ => in_before,
                };
                let out = entry.out_channels;
                let bias = if entry.bias { out as u64 } else { 0 };
                let params_before = (in_before * out) as u64 + bias;
                let params_after = (in_after * out) as u64 + bias;
                layers.push(LayerPlan {
                    name: entry.name.clone(),
                    kind: entry.kind,
                    keep_indices: None,
                    mask: None,
                    in_channels_before: in_before,
                    in_channels_after: in_after,
                    out_channels_before: out,
                    out_channels_after: out,
                    macs_before: Some((in_before * out) as u64),
                    macs_after: Some((in_after * out) as u64),
                    params_before,
                    params_after,
                });
                upstream = Some(Upstream {
                    before: out,
                    after: out,
                    from_conv: false,
                });
            }
        }
    }

    let macs_complete = layers.iter().all(|l| l.macs_before.is_some());
    let totals = PlanTotals {
        macs_before: layers.iter().filter_map(|l| l.macs_before).sum(),
        macs_after: layers.iter().filter_map(|l| l.macs_after).sum(),
        params_before: layers.iter().map(|l| l.params_before).sum(),
        params_after: layers.iter().map(|l| l.params_after).sum(),
        macs_complete,
    };
    Ok(PrunePlan {
        layers,
        totals,
        index_base: 1,
    })
}

/// Keep every filter of every conv layer.
pub fn keep_all(manifest: &NetworkManifest) -> HashMap<String, Vec<usize>> {
    manifest
        .conv_layers()
        .map(|l| (l.name.clone(), (0..l.out_channels).collect()))
        .collect()
}

pub fn plan_to_json(plan: &PrunePlan) -> Result<String> {
    Ok(serde_json::to_string_pretty(plan)? + "\n")
}

pub fn emit_plan(plan: &PrunePlan, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), plan_to_json(plan)?.as_bytes())
}

pub fn read_plan(path: impl AsRef<Path>) -> Result<PrunePlan> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PruneError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
