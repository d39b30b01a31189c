//! Random small networks and an independent MAC/parameter accumulation.

use std::collections::HashMap;

use proptest::prelude::*;
use simprune::tensor_io::{LayerEntry, LayerKind, NetworkManifest};

#[derive(Debug, Clone)]
pub struct ConvSpec {
    pub kernel: [usize; 2],
    pub out: usize,
    pub kept: usize,
    pub spatial: Option<[usize; 2]>,
    pub bias: bool,
    /// Input channels given explicitly with a channel-change marker.
    pub reset_in: Option<usize>,
    pub pool_after: bool,
}

#[derive(Debug, Clone)]
pub struct NetSpec {
    pub first_in: usize,
    pub convs: Vec<ConvSpec>,
    /// Spatial positions feeding the first dense layer, then dense widths.
    pub flatten: usize,
    pub dense: Vec<(usize, bool)>,
}

pub fn conv_spec() -> impl Strategy<Value = ConvSpec> {
    (
        (1usize..6, 1usize..6),
        1usize..12,
        0.0f64..1.0,
        prop::option::of((1usize..20, 1usize..20)),
        any::<bool>(),
        prop::option::of(1usize..10),
        any::<bool>(),
    )
        .prop_map(|((kw, kh), out, frac, spatial, bias, reset, pool)| ConvSpec {
            kernel: [kw, kh],
            out,
            kept: 1 + ((out - 1) as f64 * frac).round() as usize,
            spatial: spatial.map(|(h, w)| [h, w]),
            bias,
            reset_in: reset,
            pool_after: pool,
        })
}

pub fn net_spec() -> impl Strategy<Value = NetSpec> {
    (1usize..=3).prop_flat_map(|convs| {
        (
            1usize..5,
            prop::collection::vec(conv_spec(), convs),
            1usize..5,
            prop::collection::vec((1usize..30, any::<bool>()), 0..=(6 - convs).min(2)),
        )
            .prop_map(|(first_in, convs, flatten, dense)| NetSpec {
                first_in,
                convs,
                flatten,
                dense,
            })
    })
    .prop_filter("at most 6 layers", |s| {
        s.convs.len() + s.convs.iter().filter(|c| c.pool_after).count() + s.dense.len() <= 6
    })
}

pub fn build_network(spec: &NetSpec) -> (NetworkManifest, HashMap<String, Vec<usize>>) {
    let mut layers = Vec::new();
    let mut keeps = HashMap::new();
    let mut prev_out = spec.first_in;
    for (i, c) in spec.convs.iter().enumerate() {
        let name = format!("C{i}");
        let mut e = LayerEntry::conv2d(
            &name,
            c.kernel,
            c.reset_in.unwrap_or(prev_out),
            c.out,
            c.spatial,
        )
        .with_bias(c.bias);
        e.channel_change = c.reset_in.is_some() && i > 0;
        if i == 0 {
            e.in_channels = spec.first_in;
        }
        layers.push(e);
        // Keep the last `kept` filters so the sets are not just prefixes.
        keeps.insert(name, (c.out - c.kept..c.out).collect());
        if c.pool_after {
            layers.push(LayerEntry {
                name: format!("P{i}"),
                kind: LayerKind::Other,
                kernel: None,
                in_channels: c.out,
                out_channels: c.out,
                out_spatial: None,
                bias: false,
                channel_change: false,
            });
        }
        prev_out = c.out;
    }
    let mut width = prev_out * spec.flatten;
    for (j, &(out, bias)) in spec.dense.iter().enumerate() {
        layers.push(LayerEntry::dense(format!("D{j}"), width, out).with_bias(bias));
        width = out;
    }
    (NetworkManifest::new(layers).unwrap(), keeps)
}

pub struct Expected {
    pub macs_before: u64,
    pub macs_after: u64,
    pub params_before: u64,
    pub params_after: u64,
    pub complete: bool,
    pub conv_in_after: Vec<usize>,
}

/// Direct accumulation from the spec, independent of the manifest walk.
pub fn plan_oracle(spec: &NetSpec) -> Expected {
    let mut e = Expected {
        macs_before: 0,
        macs_after: 0,
        params_before: 0,
        params_after: 0,
        complete: true,
        conv_in_after: Vec::new(),
    };
    let mut prev: Option<(usize, usize)> = None;
    for (i, c) in spec.convs.iter().enumerate() {
        let in_before = if i == 0 {
            spec.first_in
        } else {
            c.reset_in.unwrap_or(prev.unwrap().0)
        };
        let in_after = match (i, c.reset_in, prev) {
            (0, _, _) | (_, Some(_), _) => in_before,
            (_, None, Some((_, kept))) => kept,
            _ => unreachable!(),
        };
        e.conv_in_after.push(in_after);
        let kk = (c.kernel[0] * c.kernel[1]) as u64;
        let b = |n: usize| if c.bias { n as u64 } else { 0 };
        e.params_before += kk * (in_before * c.out) as u64 + b(c.out);
        e.params_after += kk * (in_after * c.kept) as u64 + b(c.kept);
        match c.spatial {
            Some([h, w]) => {
                let hw = (h * w) as u64;
                e.macs_before += kk * (in_before * c.out) as u64 * hw;
                e.macs_after += kk * (in_after * c.kept) as u64 * hw;
            }
            None => e.complete = false,
        }
        prev = Some((c.out, c.kept));
    }
    let (last_out, last_kept) = prev.unwrap();
    let mut width_before = last_out * spec.flatten;
    let mut width_after = last_kept * spec.flatten;
    for &(out, bias) in &spec.dense {
        let b = if bias { out as u64 } else { 0 };
        e.params_before += (width_before * out) as u64 + b;
        e.params_after += (width_after * out) as u64 + b;
        e.macs_before += (width_before * out) as u64;
        e.macs_after += (width_after * out) as u64;
        width_before = out;
        width_after = out;
    }
    e
}
