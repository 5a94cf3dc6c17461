//! Parameter inventory per architecture.
//!
//! The layout — names, shapes, initializers and their order — is fully
//! determined by the [`ModelSpec`], which makes checkpoints
//! reconstructable and keeps random draws reproducible. The Transformer
//! lists its positional embedding last so that, for the same seed, all
//! parameters it shares with the Informer receive identical draws.

use super::spec::{ModelKind, ModelSpec, TCN_KERNEL_SIZE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Glorot,
    Zeros,
    Ones,
    Const(f64),
}

#[derive(Debug, Clone)]
pub struct ParamDef {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn matrix(name: String, rows: usize, cols: usize) -> ParamDef {
    ParamDef { name, shape: vec![rows, cols], init: Init::Glorot }
}

fn vector(name: String, n: usize, init: Init) -> ParamDef {
    ParamDef { name, shape: vec![n], init }
}

fn lstm_layer(defs: &mut Vec<ParamDef>, index: usize, d_in: usize, d: usize) {
    for gate in ["forget", "input", "output", "candidate"] {
        let prefix = format!("lstm{index}.{gate}");
        defs.push(matrix(format!("{prefix}.w"), d_in, d));
        defs.push(matrix(format!("{prefix}.u"), d, d));
        // Forget-gate bias starts at 1.0; the standard stabilizer.
        let init = if gate == "forget" { Init::Const(1.0) } else { Init::Zeros };
        defs.push(vector(format!("{prefix}.b"), d, init));
    }
}

fn attention_heads(defs: &mut Vec<ParamDef>, prefix: &str, spec: &ModelSpec) {
    let d = spec.hidden_dim;
    let d_k = spec.head_dim();
    for head in 0..spec.num_heads {
        for proj in ["q", "k", "v"] {
            defs.push(matrix(format!("{prefix}.h{head}.{proj}"), d, d_k));
        }
    }
}

fn encoder_block(defs: &mut Vec<ParamDef>, index: usize, spec: &ModelSpec) {
    let d = spec.hidden_dim;
    let ff = spec.ff_dim;
    let prefix = format!("enc{index}");
    attention_heads(defs, &format!("{prefix}.mha"), spec);
    defs.push(matrix(format!("{prefix}.mha.out_proj"), d, d));
    defs.push(vector(format!("{prefix}.ln1.gain"), d, Init::Ones));
    defs.push(vector(format!("{prefix}.ln1.bias"), d, Init::Zeros));
    defs.push(matrix(format!("{prefix}.ffn.w1"), d, ff));
    defs.push(vector(format!("{prefix}.ffn.b1"), ff, Init::Zeros));
    defs.push(matrix(format!("{prefix}.ffn.w2"), ff, d));
    defs.push(vector(format!("{prefix}.ffn.b2"), d, Init::Zeros));
    defs.push(vector(format!("{prefix}.ln2.gain"), d, Init::Ones));
    defs.push(vector(format!("{prefix}.ln2.bias"), d, Init::Zeros));
}

fn head(defs: &mut Vec<ParamDef>, spec: &ModelSpec) {
    defs.push(matrix("head.w".into(), spec.hidden_dim, spec.forward_look));
    defs.push(vector("head.b".into(), spec.forward_look, Init::Zeros));
}

/// Names, shapes, and initializers of every learned tensor, in draw order.
pub fn parameter_layout(spec: &ModelSpec) -> Vec<ParamDef> {
    let d = spec.hidden_dim;
    let mut defs = Vec::new();
    match spec.kind {
        ModelKind::Lstm => {
            lstm_layer(&mut defs, 0, 1, d);
            lstm_layer(&mut defs, 1, d, d);
            head(&mut defs, spec);
        }
        ModelKind::AttentionLstm => {
            lstm_layer(&mut defs, 0, 1, d);
            lstm_layer(&mut defs, 1, d, d);
            // Attention score dimension equals the hidden dimension.
            defs.push(matrix("attn.hidden_proj".into(), d, d));
            defs.push(matrix("attn.query_proj".into(), d, d));
            defs.push(matrix("attn.score".into(), d, 1));
            head(&mut defs, spec);
        }
        ModelKind::MultiHeadAttentionLstm => {
            lstm_layer(&mut defs, 0, 1, d);
            lstm_layer(&mut defs, 1, d, d);
            attention_heads(&mut defs, "mha", spec);
            defs.push(matrix("mha.out_proj".into(), d, d));
            head(&mut defs, spec);
        }
        ModelKind::Tcn => {
            for tap in 0..TCN_KERNEL_SIZE {
                defs.push(matrix(format!("conv0.tap{tap}"), 1, d));
            }
            defs.push(vector("conv0.bias".into(), d, Init::Zeros));
            for tap in 0..TCN_KERNEL_SIZE {
                defs.push(matrix(format!("conv1.tap{tap}"), d, d));
            }
            defs.push(vector("conv1.bias".into(), d, Init::Zeros));
            head(&mut defs, spec);
        }
        ModelKind::Informer | ModelKind::Transformer => {
            defs.push(matrix("embed.w".into(), 1, d));
            defs.push(vector("embed.b".into(), d, Init::Zeros));
            for block in 0..spec.num_encoder_layers {
                encoder_block(&mut defs, block, spec);
            }
            head(&mut defs, spec);
            if spec.kind == ModelKind::Transformer {
                defs.push(matrix("pos.embedding".into(), spec.past_history, d));
            }
        }
        ModelKind::Tft => {
            lstm_layer(&mut defs, 0, 1, d);
            lstm_layer(&mut defs, 1, d, d);
            // Heads are layer-normalized directly after concatenation;
            // there is no output projection in this architecture.
            attention_heads(&mut defs, "mha", spec);
            defs.push(vector("attn_norm.gain".into(), d, Init::Ones));
            defs.push(vector("attn_norm.bias".into(), d, Init::Zeros));
            defs.push(matrix("gate.w".into(), d, d));
            defs.push(vector("gate.b".into(), d, Init::Zeros));
            head(&mut defs, spec);
        }
    }
    defs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_size_matches_closed_form_count_for_all_kinds() {
        for kind in ModelKind::ALL {
            let mut spec = ModelSpec::with_defaults(kind);
            spec.past_history = 13;
            spec.forward_look = 3;
            spec.hidden_dim = 8;
            spec.ff_dim = 12;
            spec.num_heads = 2;
            let total: usize = parameter_layout(&spec)
                .iter()
                .map(|p| p.shape.iter().product::<usize>())
                .sum();
            assert_eq!(total, spec.parameter_count(), "{kind}");
        }
    }

    #[test]
    fn transformer_layout_is_informer_plus_trailing_positions() {
        let informer = ModelSpec::with_defaults(ModelKind::Informer);
        let transformer = ModelSpec {
            kind: ModelKind::Transformer,
            ..informer.clone()
        };
        let a = parameter_layout(&informer);
        let b = parameter_layout(&transformer);
        assert_eq!(b.len(), a.len() + 1);
        assert_eq!(b.last().unwrap().name, "pos.embedding");
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.shape, y.shape);
        }
    }

    #[test]
    fn names_are_unique() {
        for kind in ModelKind::ALL {
            let spec = ModelSpec::with_defaults(kind);
            let layout = parameter_layout(&spec);
            let mut names: Vec<&str> = layout.iter().map(|p| p.name.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            assert_eq!(names.len(), layout.len(), "{kind}");
        }
    }
}
