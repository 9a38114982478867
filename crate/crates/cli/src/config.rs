//! Flat `key = value` configuration, applied over the built-in defaults.
//!
//! One assignment per line; `#` starts a comment. The same keys work as
//! repeatable `--set key=value` flags, which are applied after the file so
//! the command line wins. Per-stage random seeds are not configurable here:
//! stages derive them from the master `seed`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crossnet::fuse::Activation;
use crossnet::pipeline::PipelineConfig;
use crossnet::{Error, Result};

/// Reads assignments in file order.
pub fn load_file(path: &Path) -> Result<Vec<(String, String)>> {
    let body = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, raw) in body.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected key = value, found {line:?}"),
            });
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse<T: FromStr>(key: &str, value: &str, want: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key {key}: cannot parse {value:?} as {want}")))
}

/// Applies one assignment to the pipeline configuration.
pub fn apply(cfg: &mut PipelineConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "graph_a" => cfg.graph_a = PathBuf::from(value),
        "graph_b" => cfg.graph_b = PathBuf::from(value),
        "out_dir" => cfg.out_dir = PathBuf::from(value),
        "eps_a" => cfg.budget.eps_a = parse(key, value, "a positive number")?,
        "eps_g" => cfg.budget.eps_g = parse(key, value, "a positive number")?,
        "eps_t" => cfg.budget.eps_t = parse(key, value, "a positive number")?,
        "seed" => cfg.seed = parse(key, value, "an unsigned integer")?,
        "deterministic" => cfg.deterministic = parse(key, value, "true or false")?,
        "ablation" => cfg.ablation = parse(key, value, "true or false")?,
        "word.dim" => cfg.word.dim = parse(key, value, "an unsigned integer")?,
        "word.window" => cfg.word.window = parse(key, value, "an unsigned integer")?,
        "word.negatives" => cfg.word.negatives = parse(key, value, "an unsigned integer")?,
        "word.epochs" => cfg.word.epochs = parse(key, value, "an unsigned integer")?,
        "word.learning_rate" => cfg.word.learning_rate = parse(key, value, "a number")?,
        "word.min_count" => cfg.word.min_count = parse(key, value, "an unsigned integer")?,
        "walks.walks_per_node" => {
            cfg.walks.walks_per_node = parse(key, value, "an unsigned integer")?
        }
        "walks.walk_length" => cfg.walks.walk_length = parse(key, value, "an unsigned integer")?,
        "encoder.hidden_dim" => cfg.encoder.hidden_dim = parse(key, value, "an unsigned integer")?,
        "encoder.out_dim" => cfg.encoder.out_dim = parse(key, value, "an unsigned integer")?,
        "encoder.negatives" => cfg.encoder.negatives = parse(key, value, "an unsigned integer")?,
        "encoder.neg_exponent" => cfg.encoder.neg_exponent = parse(key, value, "a number")?,
        "encoder.learning_rate" => cfg.encoder.learning_rate = parse(key, value, "a number")?,
        "encoder.epochs" => cfg.encoder.epochs = parse(key, value, "an unsigned integer")?,
        "gan.hidden" => cfg.gan.hidden = parse(key, value, "an unsigned integer")?,
        "gan.epochs" => cfg.gan.epochs = parse(key, value, "an unsigned integer")?,
        "gan.batch_size" => cfg.gan.batch_size = parse(key, value, "an unsigned integer")?,
        "gan.lr_generator" => cfg.gan.lr_generator = parse(key, value, "a number")?,
        "gan.lr_discriminator" => cfg.gan.lr_discriminator = parse(key, value, "a number")?,
        "gan.beta" => cfg.gan.beta = parse(key, value, "a number")?,
        "gan.restarts" => cfg.gan.restarts = parse(key, value, "an unsigned integer")?,
        "gan.csls_k" => cfg.gan.csls_k = parse(key, value, "an unsigned integer")?,
        "anchor_k" => cfg.anchor_k = parse(key, value, "an unsigned integer")?,
        "anchor_margin" => cfg.anchor_margin = parse(key, value, "a number")?,
        "fusion.out_dim" => cfg.fusion.out_dim = parse(key, value, "an unsigned integer")?,
        "fusion.k" => cfg.fusion.k = parse(key, value, "an unsigned integer")?,
        "fusion.alpha" => cfg.fusion.alpha = parse(key, value, "a number")?,
        "fusion.activation" => {
            cfg.fusion.activation = match value {
                "relu" => Activation::Relu,
                "identity" => Activation::Identity,
                _ => {
                    return Err(Error::Config(format!(
                        "key {key}: expected relu or identity, found {value:?}"
                    )))
                }
            }
        }
        "fusion.negatives" => cfg.fusion.negatives = parse(key, value, "an unsigned integer")?,
        "fusion.neg_exponent" => cfg.fusion.neg_exponent = parse(key, value, "a number")?,
        "fusion.learning_rate" => cfg.fusion.learning_rate = parse(key, value, "a number")?,
        "fusion.epochs" => cfg.fusion.epochs = parse(key, value, "an unsigned integer")?,
        "protocol.train_ratio" => cfg.protocol.train_ratio = parse(key, value, "a number")?,
        "protocol.seeds" => {
            let mut seeds = Vec::new();
            for part in value.split(',') {
                seeds.push(parse(key, part.trim(), "an unsigned integer")?);
            }
            cfg.protocol.seeds = seeds;
        }
        "tree.max_depth" => cfg.tree.max_depth = parse(key, value, "an unsigned integer")?,
        "tree.min_leaf" => cfg.tree.min_leaf = parse(key, value, "an unsigned integer")?,
        "logreg.learning_rate" => cfg.logreg.learning_rate = parse(key, value, "a number")?,
        "logreg.epochs" => cfg.logreg.epochs = parse(key, value, "an unsigned integer")?,
        "logreg.l2" => cfg.logreg.l2 = parse(key, value, "a number")?,
        _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
    }
    Ok(())
}
