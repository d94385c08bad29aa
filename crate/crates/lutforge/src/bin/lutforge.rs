//! Command-line surface: thin dispatch onto the library.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lutforge::error::{Error, Result};
use lutforge::estimate::{estimate_luts, LutPrimitiveSpec};
use lutforge::io::dataset::{ingest, save_cache, DatasetSpec};
use lutforge::io::manifest::{load_manifest, save_manifest};
use lutforge::io::synth;
use lutforge::ir::{load_program, save_program};
use lutforge::layers::{Activation, Layer, LutConvLayer, LutDenseLayer, Model, Padding, QDenseLayer};
use lutforge::lower::{lower_report, verify_bit_exact, LowerOptions};
use lutforge::rtl::{parse_bus_hex, write_rtl_dir, EmitOptions};
use lutforge::train::{train, TrainConfig, TrainData};

#[derive(Parser)]
#[command(name = "lutforge", about = "Train LUT networks and compile them to verifiable RTL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a dataset, split it and persist the normalized cache.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and collect the Pareto checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        beta_start: Option<f64>,
        #[arg(long)]
        beta_end: Option<f64>,
    },
    /// Compile a trained model into a program file plus reports.
    Compile {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        lut_x: u32,
        #[arg(long, default_value_t = 5)]
        lut_y: u32,
        #[arg(long, default_value_t = 16)]
        max_table_bits: u32,
    },
    /// Print per-layer EBOPs, hard widths and estimated LUTs.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        lut_x: u32,
        #[arg(long, default_value_t = 5)]
        lut_y: u32,
    },
    /// Run a compiled program on hex input vectors.
    Emulate {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prove interpreter/model bit-exactness over random vectors.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        program: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        vectors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Emit Verilog plus a self-checking testbench with vector files.
    EmitRtl {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        vectors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        stage_depth: usize,
    },
    /// Print the Pareto set collected by a training run.
    Pareto {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Generate a synthetic dataset CSV (for demos and tests).
    Synth {
        #[arg(long, default_value = "jets")]
        kind: String,
        #[arg(long, default_value_t = 4000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
enum LayerConfig {
    #[serde(rename = "lut_dense")]
    LutDense {
        c_out: usize,
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(default)]
        batchnorm: bool,
    },
    #[serde(rename = "lut_conv")]
    LutConv {
        kernel: Vec<usize>,
        stride: Vec<usize>,
        padding: Padding,
        c_out: usize,
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(default)]
        batchnorm: bool,
    },
    #[serde(rename = "q_dense")]
    QDense { c_out: usize },
    #[serde(rename = "flatten")]
    Flatten,
}

fn default_hidden() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelConfig {
    input_shape: Vec<usize>,
    layers: Vec<LayerConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunConfig {
    dataset: DatasetSpec,
    model: ModelConfig,
    train: TrainConfig,
    #[serde(default = "default_lut_x")]
    lut_x: u32,
    #[serde(default = "default_lut_y")]
    lut_y: u32,
}

fn default_lut_x() -> u32 {
    6
}

fn default_lut_y() -> u32 {
    5
}

fn load_config(path: &Path) -> Result<(RunConfig, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
    let hash: String = Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok((cfg, hash))
}

fn build_model(cfg: &ModelConfig, seed: u64, config_hash: String) -> Result<Model> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut shape = cfg.input_shape.clone();
    let mut layers = Vec::with_capacity(cfg.layers.len());
    for (idx, lc) in cfg.layers.iter().enumerate() {
        let flat: usize = shape.iter().product();
        let layer = match lc {
            LayerConfig::LutDense { c_out, hidden, batchnorm } => {
                if shape.len() != 1 {
                    return Err(Error::Config(format!(
                        "layer {idx}: lut_dense needs a flat input; insert a flatten layer"
                    )));
                }
                let l = LutDenseLayer::new(flat, *c_out, *hidden, Activation::Tanh, *batchnorm, &mut rng);
                shape = vec![*c_out];
                Layer::LutDense(l)
            }
            LayerConfig::QDense { c_out } => {
                if shape.len() != 1 {
                    return Err(Error::Config(format!(
                        "layer {idx}: q_dense needs a flat input; insert a flatten layer"
                    )));
                }
                let l = QDenseLayer::new(flat, *c_out, &mut rng);
                shape = vec![*c_out];
                Layer::QDense(l)
            }
            LayerConfig::LutConv { kernel, stride, padding, c_out, hidden, batchnorm } => {
                if shape.len() != kernel.len() + 1 {
                    return Err(Error::Config(format!(
                        "layer {idx}: lut_conv kernel rank {} vs input shape {shape:?}",
                        kernel.len()
                    )));
                }
                let channels = *shape.last().unwrap();
                let l = LutConvLayer::new(
                    kernel.clone(),
                    stride.clone(),
                    *padding,
                    channels,
                    *c_out,
                    *hidden,
                    Activation::Tanh,
                    *batchnorm,
                    &mut rng,
                );
                shape = l.out_shape(&shape)?;
                Layer::LutConv(l)
            }
            LayerConfig::Flatten => {
                shape = vec![flat];
                Layer::Flatten
            }
        };
        layers.push(layer);
    }
    let mut model = Model::new(cfg.input_shape.clone(), layers);
    model.seed = seed;
    model.config_hash = config_hash;
    Ok(model)
}

fn report_text(report: &lutforge::lower::LowerReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<28} {:>8} {:>8} {:>10} {:>8} {:>12} {:>12}\n",
        "layer", "instrs", "tables", "entries", "pruned", "ebops", "est_luts"
    ));
    for l in &report.layers {
        s.push_str(&format!(
            "{:<28} {:>8} {:>8} {:>10} {:>8} {:>12.2} {:>12.2}\n",
            l.name, l.instrs, l.tables, l.table_entries, l.pruned_slots, l.ebops_hard, l.est_luts
        ));
    }
    s.push_str(&format!(
        "total: {} instrs, EBOPs {:.2}, estimated LUTs {:.2}, pruning ratio {:.3}\n",
        report.total_instrs, report.total_ebops, report.total_est_luts, report.pruning_ratio
    ));
    s
}

fn report_csv(report: &lutforge::lower::LowerReport) -> String {
    let mut s =
        String::from("layer,instrs,tables,entries,grid_slots,pruned_slots,ebops,est_luts\n");
    for l in &report.layers {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            l.name, l.instrs, l.tables, l.table_entries, l.grid_slots, l.pruned_slots,
            l.ebops_hard, l.est_luts
        ));
    }
    s.push_str(&format!(
        "total,{},,,,,{},{}\n",
        report.total_instrs, report.total_ebops, report.total_est_luts
    ));
    s
}

fn width_stats(widths: &[u32]) -> (u32, f64, u32) {
    if widths.is_empty() {
        return (0, 0.0, 0);
    }
    let min = *widths.iter().min().unwrap();
    let max = *widths.iter().max().unwrap();
    let mean = widths.iter().map(|&w| w as f64).sum::<f64>() / widths.len() as f64;
    (min, mean, max)
}

fn cmd_estimate(model_path: &Path, out: Option<&Path>, spec: LutPrimitiveSpec) -> Result<()> {
    let model = load_manifest(model_path)?;
    let instances = model.layer_instances()?;
    let mut csv = String::from(
        "layer,instances,ebops,est_luts,m_min,m_mean,m_max,n_min,n_mean,n_max,pruned,slots\n",
    );
    println!(
        "{:<24} {:>6} {:>12} {:>12} {:>16} {:>16} {:>8}",
        "layer", "inst", "ebops", "est_luts", "m(min/mean/max)", "n(min/mean/max)", "pruned"
    );
    let mut total = 0.0;
    for (idx, layer) in model.layers.iter().enumerate() {
        let (name, ebops, m_w, n_w, slots) = match layer {
            Layer::LutDense(l) => {
                let m: Vec<u32> = (0..l.q_in.len()).map(|e| l.q_in.width(e)).collect();
                let n: Vec<u32> = (0..l.q_out.len()).map(|e| l.q_out.width(e)).collect();
                (format!("{idx}:lut_dense"), l.ebops_hard(&spec), m, n, l.c_in * l.c_out)
            }
            Layer::LutConv(l) => {
                let m: Vec<u32> =
                    (0..l.inner.q_in.len()).map(|e| l.inner.q_in.width(e)).collect();
                let n: Vec<u32> =
                    (0..l.inner.q_out.len()).map(|e| l.inner.q_out.width(e)).collect();
                (
                    format!("{idx}:lut_conv"),
                    instances[idx] as f64 * l.inner.ebops_hard(&spec),
                    m,
                    n,
                    l.inner.c_in * l.inner.c_out,
                )
            }
            Layer::QDense(l) => {
                let m: Vec<u32> = (0..l.q_act.len()).map(|e| l.q_act.width(e)).collect();
                let n: Vec<u32> = (0..l.q_w.len()).map(|e| l.q_w.width(e)).collect();
                (format!("{idx}:q_dense"), l.ebops_hard(), m, n, l.c_in * l.c_out)
            }
            Layer::Flatten => (format!("{idx}:flatten"), 0.0, vec![], vec![], 0),
        };
        total += ebops;
        let pruned = m_w.iter().filter(|&&w| w == 0).count()
            + n_w.iter().filter(|&&w| w == 0).count();
        let (m0, m1, m2) = width_stats(&m_w);
        let (n0, n1, n2) = width_stats(&n_w);
        println!(
            "{name:<24} {:>6} {ebops:>12.2} {:>12.2} {m0:>6}/{m1:>4.1}/{m2:<4} {n0:>6}/{n1:>4.1}/{n2:<4} {pruned:>8}",
            instances[idx],
            estimate_luts(ebops)
        );
        csv.push_str(&format!(
            "{name},{},{ebops},{},{m0},{m1},{m2},{n0},{n1},{n2},{pruned},{slots}\n",
            instances[idx],
            estimate_luts(ebops)
        ));
    }
    println!("total EBOPs {total:.2}, estimated LUTs {:.2}", estimate_luts(total));
    csv.push_str(&format!("total,,{total},{},,,,,,,,\n", estimate_luts(total)));
    if let Some(path) = out {
        lutforge::io::atomic_write(path, csv.as_bytes())?;
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { config, out } => {
            let (cfg, _) = load_config(&config)?;
            let ds = ingest(&cfg.dataset)?;
            std::fs::create_dir_all(&out)?;
            save_cache(&ds, &cfg.dataset, &out.join("cache.json"))?;
            println!(
                "ingested {} rows x {} features: {} train / {} val / {} test -> {}",
                ds.n_rows(),
                ds.n_features(),
                ds.splits.train.len(),
                ds.splits.val.len(),
                ds.splits.test.len(),
                out.join("cache.json").display()
            );
        }
        Command::Train { config, out, seed, beta_start, beta_end } => {
            let (mut cfg, hash) = load_config(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(b) = beta_start {
                cfg.train.beta_start = b;
            }
            if let Some(b) = beta_end {
                cfg.train.beta_end = b;
            }
            let spec = LutPrimitiveSpec::new(cfg.lut_x, cfg.lut_y)?;
            let ds = ingest(&cfg.dataset)?;
            let data = TrainData::from_dataset(&ds);
            let mut model = build_model(&cfg.model, cfg.train.seed, hash)?;
            let result = train(&mut model, &data, &cfg.train, &spec, Some(&out))?;
            save_manifest(&model, &out.join("model.json"))?;
            println!(
                "trained {} epochs; pareto set has {} points; outputs in {}",
                cfg.train.epochs,
                result.pareto.points.len(),
                out.display()
            );
            for p in &result.pareto.points {
                println!("  ebops {:>12.2}  metric {:>8.4}  {}", p.ebops, p.val_metric, p.checkpoint_id);
            }
        }
        Command::Compile { model, out, lut_x, lut_y, max_table_bits } => {
            let m = load_manifest(&model)?;
            let opts = LowerOptions {
                max_table_bits,
                spec: LutPrimitiveSpec::new(lut_x, lut_y)?,
            };
            let (program, report) = lower_report(&m, &opts)?;
            std::fs::create_dir_all(&out)?;
            save_program(&program, &out.join("model.lfir"))?;
            lutforge::io::atomic_write(&out.join("report.txt"), report_text(&report).as_bytes())?;
            lutforge::io::atomic_write(&out.join("report.csv"), report_csv(&report).as_bytes())?;
            print!("{}", report_text(&report));
            println!("wrote {}", out.join("model.lfir").display());
        }
        Command::Estimate { model, out, lut_x, lut_y } => {
            cmd_estimate(&model, out.as_deref(), LutPrimitiveSpec::new(lut_x, lut_y)?)?;
        }
        Command::Emulate { program, inputs, out } => {
            let p = load_program(&program)?;
            p.validate_ok()?;
            let text = std::fs::read_to_string(&inputs)?;
            let vectors: Vec<Vec<u64>> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| parse_bus_hex(l.trim(), &p.input_formats))
                .collect::<Result<_>>()?;
            let outputs = lutforge::ir::interpret_batch(&p, &vectors)?;
            let mut s = String::new();
            for o in &outputs {
                s.push_str(&lutforge::rtl::bus_hex(o, &p.output_formats));
                s.push('\n');
            }
            match out {
                Some(path) => lutforge::io::atomic_write(&path, s.as_bytes())?,
                None => print!("{s}"),
            }
            eprintln!("emulated {} vectors", outputs.len());
        }
        Command::Verify { model, program, vectors, seed } => {
            let m = load_manifest(&model)?;
            let p = match program {
                Some(path) => load_program(&path)?,
                None => lutforge::lower::lower(&m, &LowerOptions::default())?,
            };
            let n = verify_bit_exact(&m, &p, vectors, seed)?;
            println!("bit-exact over {n} vectors");
        }
        Command::EmitRtl { program, out, vectors, seed, stage_depth } => {
            let p = load_program(&program)?;
            let opts = EmitOptions { stage_depth, ..Default::default() };
            let rtl = write_rtl_dir(&p, &opts, vectors, seed, &out)?;
            println!(
                "wrote {}: {} stage(s), latency {} cycles, {} vectors",
                out.display(),
                rtl.stages,
                rtl.latency,
                vectors
            );
        }
        Command::Pareto { run_dir } => {
            let path = run_dir.join("pareto.csv");
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            print!("{text}");
        }
        Command::Synth { kind, rows, seed, out } => {
            let (x, y) = match kind.as_str() {
                "jets" => synth::synthetic_jets(rows, seed),
                "blobs" => synth::two_blobs(rows, seed),
                "tracking" => synth::synthetic_tracking(rows, seed),
                other => {
                    return Err(Error::Config(format!(
                        "unknown synth kind '{other}' (jets, blobs, tracking)"
                    )))
                }
            };
            synth::write_csv(&out, &x, &y, "label")?;
            println!("wrote {} rows to {}", rows, out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
