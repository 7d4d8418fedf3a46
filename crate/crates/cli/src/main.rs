mod report;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use forestwave::coarse;
use forestwave::io as fio;
use forestwave::oracle;
use forestwave::sampler;
use forestwave::wavelets::{self, Pyramid, PyramidConfig};
use forestwave::{Error, Exponent, Network};
use serde::{Deserialize, Serialize};

use report::Report;

const FILE_FORMAT: &str = "forestwave-pyramid";
const FILE_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "forestwave", version, about = "Random forests, network reduction and intertwining wavelets")]
struct Cli {
    /// Cap on worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print results as JSON instead of key=value lines
    #[arg(long, global = true)]
    json: bool,
    /// Validate inputs and parameters, then stop
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact forest statistics
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Forest sampling
    #[command(subcommand)]
    Forest(ForestCmd),
    /// Network inspection and reduction
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Wavelet analysis of signals and images
    #[command(subcommand)]
    Signal(SignalCmd),
    /// Scan forest rates and report the tuning proxies
    Tune(TuneArgs),
}

#[derive(Args, Clone)]
struct GraphIn {
    /// Edge list (`src dst weight` per line)
    #[arg(long)]
    graph: PathBuf,
    /// Add the reverse of every listed edge
    #[arg(long)]
    undirected: bool,
}

#[derive(Args, Clone)]
struct RateIn {
    #[arg(long)]
    q: f64,
    /// Absorbing vertices, comma separated
    #[arg(long, default_value = "")]
    absorbing: String,
}

#[derive(Subcommand)]
enum OracleCmd {
    /// det[q Id - L] restricted to the complement of the absorbing set
    PartitionFn {
        #[command(flatten)]
        g: GraphIn,
        #[command(flatten)]
        r: RateIn,
    },
    /// Law of the number of roots
    RootCount {
        #[command(flatten)]
        g: GraphIn,
        #[command(flatten)]
        r: RateIn,
    },
    /// Probability that a vertex set consists of roots
    RootInclusion {
        #[command(flatten)]
        g: GraphIn,
        #[command(flatten)]
        r: RateIn,
        #[arg(long)]
        set: String,
    },
    /// Probability that edges `a-b,c-d` all belong to the forest
    EdgeInclusion {
        #[command(flatten)]
        g: GraphIn,
        #[command(flatten)]
        r: RateIn,
        #[arg(long)]
        edges: String,
        /// Count either orientation of each edge
        #[arg(long)]
        signed: bool,
    },
    /// Mean and variance of the root count
    Moments {
        #[command(flatten)]
        g: GraphIn,
        #[arg(long)]
        q: f64,
    },
    /// Kernel of the killed, absorbed walk
    Kernel {
        #[command(flatten)]
        g: GraphIn,
        #[command(flatten)]
        r: RateIn,
    },
    /// Probability of a loop-erased path
    Lerw {
        #[command(flatten)]
        g: GraphIn,
        #[command(flatten)]
        r: RateIn,
        #[arg(long)]
        path: String,
    },
    /// Expected hitting times of a target set
    Hitting {
        #[command(flatten)]
        g: GraphIn,
        #[arg(long)]
        target: String,
    },
    /// Mean hitting time of the root set, optionally given the root count
    MeanHitting {
        #[command(flatten)]
        g: GraphIn,
        #[arg(long, required_unless_present = "m")]
        q: Option<f64>,
        #[arg(long)]
        m: Option<usize>,
    },
}

#[derive(Subcommand)]
enum ForestCmd {
    /// Wilson samples, written out or summarized
    Sample {
        #[command(flatten)]
        g: GraphIn,
        #[command(flatten)]
        r: RateIn,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of samples
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Print aggregate statistics against the exact law
        #[arg(long)]
        stats: bool,
        /// Write only the root set
        #[arg(long)]
        roots_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forest with about `m` roots
    MRoots {
        #[command(flatten)]
        g: GraphIn,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Root locations against restricted equilibria, per partition
    Equilibrium {
        #[command(flatten)]
        g: GraphIn,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        min_count: u64,
    },
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Size, rates, reversibility and invariant measure
    Info {
        #[command(flatten)]
        g: GraphIn,
    },
    /// Trace-process reduction onto a vertex file or onto forest roots (`roots:q=VALUE`)
    Reduce {
        #[command(flatten)]
        g: GraphIn,
        #[arg(long)]
        keep: String,
        /// Sparsify each reduction with this slack
        #[arg(long)]
        sparsify: Option<f64>,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Output prefix; writes PREFIX.levelK.tsv and PREFIX.levelK.map
        #[arg(long)]
        out: PathBuf,
    },
    /// Hitting-time constants of a retained set
    BetaGamma {
        #[command(flatten)]
        g: GraphIn,
        #[arg(long)]
        keep: String,
    },
    /// Metastable kernel of a partition (`0,1;2,3`) and its intertwining error
    Metastable {
        #[command(flatten)]
        g: GraphIn,
        #[arg(long)]
        blocks: String,
        #[arg(long)]
        q_prime: f64,
    },
}

#[derive(Args, Clone)]
struct SignalIn {
    #[arg(long, conflicts_with = "image", required_unless_present = "image")]
    graph: Option<PathBuf>,
    #[arg(long)]
    undirected: bool,
    /// Signal CSV with header `vertex,value`
    #[arg(long, required_unless_present = "image")]
    signal: Option<PathBuf>,
    /// PGM image analysed on its pixel grid
    #[arg(long)]
    image: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SignalCmd {
    /// Build a wavelet pyramid
    Analyze {
        #[command(flatten)]
        input: SignalIn,
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sparsify: Option<f64>,
        /// Forest samples per candidate rate
        #[arg(long, default_value_t = 64)]
        samples: usize,
        /// Candidate forest rates, comma separated
        #[arg(long)]
        q_grid: Option<String>,
    },
    /// Keep the largest fraction of detail coefficients
    Compress {
        #[arg(long)]
        pyramid: PathBuf,
        #[arg(long)]
        keep: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        signal_out: Option<PathBuf>,
        #[arg(long)]
        image_out: Option<PathBuf>,
    },
    /// Synthesize the signal from a pyramid
    Reconstruct {
        #[arg(long)]
        pyramid: PathBuf,
        #[arg(long)]
        signal_out: Option<PathBuf>,
        #[arg(long)]
        image_out: Option<PathBuf>,
    },
    /// Relative error against kept fraction, as CSV
    Curve {
        #[arg(long)]
        pyramid: PathBuf,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stability bounds and measured norms
    Bounds {
        #[arg(long)]
        pyramid: PathBuf,
        /// Norm exponent (`inf` allowed)
        #[arg(long, default_value = "2")]
        p: String,
    },
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    g: GraphIn,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long)]
    q_grid: Option<String>,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
struct ImageMeta {
    width: usize,
    height: usize,
    maxval: u16,
}

#[derive(Serialize, Deserialize)]
struct PyramidFile {
    format: String,
    version: u32,
    image: Option<ImageMeta>,
    pyramid: Pyramid,
}

enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn need_seed(seed: Option<u64>) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Usage("--seed is required for stochastic commands".into()))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Lib(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Lib(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn load_graph(g: &GraphIn) -> CliResult<Network> {
    Ok(fio::read_edge_list(open(&g.graph)?, g.undirected)?)
}

fn ids(text: &str) -> CliResult<Vec<usize>> {
    fio::parse_id_list(text).map_err(|e| CliError::Usage(e.to_string()))
}

fn floats(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad number `{t}`"))))
        .collect()
}

fn edge_pairs(text: &str) -> CliResult<Vec<(usize, usize)>> {
    text.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (a, b) = t
                .trim()
                .split_once('-')
                .ok_or_else(|| CliError::Usage(format!("edge `{t}` is not `a-b`")))?;
            match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => usage(format!("edge `{t}` is not `a-b`")),
            }
        })
        .collect()
}

fn check_rate(q: f64) -> CliResult<()> {
    if !(q >= 0.0) || !q.is_finite() {
        return usage(format!("--q must be a finite number >= 0, got {q}"));
    }
    Ok(())
}

fn check_vertices(net: &Network, vs: &[usize]) -> CliResult<()> {
    match vs.iter().find(|&&v| v >= net.n()) {
        Some(&v) => Err(CliError::Lib(Error::VertexOutOfRange { vertex: v, n: net.n() })),
        None => Ok(()),
    }
}

fn fmt_pmf(law: &oracle::RootCountLaw) -> String {
    law.support()
        .map(|(k, p)| (k, display_round(p)))
        .filter(|&(_, p)| p > 0.0)
        .map(|(k, p)| format!("{k}:{p}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Rounds to 12 decimals so exact rationals print cleanly.
fn display_round(p: f64) -> f64 {
    let r = (p * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn dry(report: &mut Report) -> CliResult<()> {
    report.put("dry_run", "ok");
    Ok(())
}

fn run_oracle(cmd: OracleCmd, dry_run: bool, rep: &mut Report) -> CliResult<()> {
    match cmd {
        OracleCmd::PartitionFn { g, r } => {
            let net = load_graph(&g)?;
            let b = ids(&r.absorbing)?;
            check_vertices(&net, &b)?;
            if dry_run {
                return dry(rep);
            }
            rep.put("partition_fn", oracle::partition_fn(&net, r.q, &b)?);
        }
        OracleCmd::RootCount { g, r } => {
            let net = load_graph(&g)?;
            check_rate(r.q)?;
            let b = ids(&r.absorbing)?;
            check_vertices(&net, &b)?;
            if dry_run {
                return dry(rep);
            }
            let law = oracle::root_count_law(&net, r.q, &b)?;
            rep.put("pmf", fmt_pmf(&law));
            rep.put("mean", law.mean());
        }
        OracleCmd::RootInclusion { g, r, set } => {
            let net = load_graph(&g)?;
            check_rate(r.q)?;
            let (b, a) = (ids(&r.absorbing)?, ids(&set)?);
            check_vertices(&net, &b)?;
            check_vertices(&net, &a)?;
            if dry_run {
                return dry(rep);
            }
            rep.put("probability", oracle::root_inclusion_prob(&net, r.q, &b, &a)?);
        }
        OracleCmd::EdgeInclusion { g, r, edges, signed } => {
            let net = load_graph(&g)?;
            check_rate(r.q)?;
            let b = ids(&r.absorbing)?;
            let e = edge_pairs(&edges)?;
            check_vertices(&net, &b)?;
            if dry_run {
                return dry(rep);
            }
            let p = if signed {
                oracle::signed_edge_inclusion_prob(&net, r.q, &b, &e)?
            } else {
                oracle::edge_inclusion_prob(&net, r.q, &b, &e)?
            };
            rep.put("probability", p);
        }
        OracleCmd::Moments { g, q } => {
            let net = load_graph(&g)?;
            check_rate(q)?;
            if dry_run {
                return dry(rep);
            }
            let m = oracle::root_count_moments(&net, q)?;
            rep.put("mean", m.mean).put("variance", m.variance);
        }
        OracleCmd::Kernel { g, r } => {
            let net = load_graph(&g)?;
            check_rate(r.q)?;
            let b = ids(&r.absorbing)?;
            check_vertices(&net, &b)?;
            if dry_run {
                return dry(rep);
            }
            let gk = oracle::green(&net, r.q, &b)?;
            for x in 0..net.n() {
                let row: Vec<f64> = gk.kernel.row(x).iter().copied().collect();
                rep.put(&format!("kernel.{x}"), row);
            }
        }
        OracleCmd::Lerw { g, r, path } => {
            let net = load_graph(&g)?;
            check_rate(r.q)?;
            let (b, p) = (ids(&r.absorbing)?, ids(&path)?);
            if dry_run {
                return dry(rep);
            }
            rep.put("probability", oracle::lerw_path_prob(&net, r.q, &b, &p)?);
        }
        OracleCmd::Hitting { g, target } => {
            let net = load_graph(&g)?;
            let t = ids(&target)?;
            check_vertices(&net, &t)?;
            if dry_run {
                return dry(rep);
            }
            rep.put("hitting_times", oracle::hitting_times(&net, &t)?);
        }
        OracleCmd::MeanHitting { g, q, m } => {
            let net = load_graph(&g)?;
            if let Some(q) = q {
                check_rate(q)?;
            }
            if dry_run {
                return dry(rep);
            }
            if let Some(q) = q {
                rep.put("mean_root_hitting", oracle::mean_root_hitting(&net, q)?);
            }
            if let Some(m) = m {
                rep.put("mean_root_hitting_given_m", oracle::mean_root_hitting_conditional(&net, m)?);
            }
        }
    }
    Ok(())
}

fn run_forest(cmd: ForestCmd, dry_run: bool, rep: &mut Report) -> CliResult<()> {
    match cmd {
        ForestCmd::Sample {
            g,
            r,
            seed,
            n,
            stats,
            roots_only,
            out,
        } => {
            let seed = need_seed(seed)?;
            let net = load_graph(&g)?;
            check_rate(r.q)?;
            let b = ids(&r.absorbing)?;
            check_vertices(&net, &b)?;
            if n == 0 {
                return usage("--n must be at least 1");
            }
            if r.q == 0.0 && b.is_empty() {
                return usage("--q 0 needs a nonempty --absorbing set");
            }
            if dry_run {
                return dry(rep);
            }
            if stats || n > 1 {
                let s = sampler::empirical_stats(&net, r.q, &b, n, seed)?;
                let law = oracle::root_count_law(&net, r.q, &b)?;
                let freqs: Vec<String> = (0..=net.n())
                    .filter(|&k| s.root_hist[k] > 0)
                    .map(|k| format!("{k}:{}", s.root_count_freq(k)))
                    .collect();
                let chi = s.chi_square(&law);
                rep.put("samples", s.samples)
                    .put("seed", seed)
                    .put("root_count_freq", freqs.join(" "))
                    .put("root_count_pmf", fmt_pmf(&law))
                    .put("mean_roots", s.mean_root_count())
                    .put("chi_square", chi.statistic)
                    .put("chi_square_dof", chi.dof)
                    .put("chi_square_p", chi.p_value)
                    .put("root_freq", (0..net.n()).map(|x| s.root_freq(x)).collect::<Vec<_>>());
                if let Some(path) = out {
                    let mut w = create(&path)?;
                    w.write_all(serde_json::to_string_pretty(&s).map_err(Error::from)?.as_bytes())?;
                    w.write_all(b"\n")?;
                    rep.put("out", path.display().to_string());
                }
            } else {
                let f = sampler::wilson_sample(&net, r.q, &b, seed)?;
                let mut text = Vec::new();
                if roots_only {
                    writeln!(text, "roots {}", f.roots.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))?;
                } else {
                    fio::write_forest(&f, &mut text)?;
                }
                match out {
                    Some(path) => {
                        create(&path)?.write_all(&text)?;
                        rep.put("roots", f.roots.clone()).put("out", path.display().to_string());
                    }
                    None => {
                        std::io::stdout().write_all(&text)?;
                    }
                }
            }
        }
        ForestCmd::MRoots {
            g,
            m,
            seed,
            max_iters,
            out,
        } => {
            let seed = need_seed(seed)?;
            let net = load_graph(&g)?;
            if m == 0 || m > net.n() {
                return usage(format!("--m must be in 1..={}", net.n()));
            }
            if dry_run {
                return dry(rep);
            }
            let (s, converged) = match sampler::sample_with_m_roots(&net, m, seed, max_iters) {
                Ok(s) => (s, true),
                Err(Error::MaxItersExceeded(best)) => (*best, false),
                Err(e) => return Err(e.into()),
            };
            rep.put("converged", converged)
                .put("iterations", s.iterations)
                .put("q", s.q)
                .put("root_count", s.forest.root_count());
            if let Some(path) = out {
                fio::write_forest(&s.forest, create(&path)?)?;
                rep.put("out", path.display().to_string());
            }
            if !converged {
                return Err(Error::MaxItersExceeded(Box::new(s)).into());
            }
        }
        ForestCmd::Equilibrium {
            g,
            q,
            seed,
            n,
            min_count,
        } => {
            let seed = need_seed(seed)?;
            let net = load_graph(&g)?;
            check_rate(q)?;
            if dry_run {
                return dry(rep);
            }
            let r = sampler::conditional_root_equilibrium_check(&net, q, n, seed, min_count)?;
            rep.put("partitions_checked", r.partitions.len()).put("max_tv", r.max_tv);
            for p in &r.partitions {
                let blocks: Vec<String> = p
                    .blocks
                    .iter()
                    .map(|b| b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
                    .collect();
                rep.put(&format!("partition.{}", blocks.join(";")), format!("count={} tv={}", p.count, p.tv));
            }
        }
    }
    Ok(())
}

/// Retained set: a vertex file, or the roots of a forest drawn at `roots:q=VALUE`.
enum KeepRule {
    Fixed(Vec<usize>),
    Roots(f64),
}

fn keep_rule(text: &str) -> CliResult<KeepRule> {
    if let Some(rest) = text.strip_prefix("roots:") {
        let q = rest
            .strip_prefix("q=")
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|q| *q > 0.0)
            .ok_or_else(|| CliError::Usage(format!("bad keep rule `{text}`, expected roots:q=VALUE")))?;
        return Ok(KeepRule::Roots(q));
    }
    let body = std::fs::read_to_string(text)
        .map_err(|e| CliError::Lib(Error::Io(std::io::Error::new(e.kind(), format!("{text}: {e}")))))?;
    Ok(KeepRule::Fixed(fio::parse_id_list(&body)?))
}

fn level_path(prefix: &Path, level: usize, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!(".level{level}.{ext}"));
    PathBuf::from(s)
}

fn run_graph(cmd: GraphCmd, dry_run: bool, rep: &mut Report) -> CliResult<()> {
    match cmd {
        GraphCmd::Info { g } => {
            let net = load_graph(&g)?;
            if dry_run {
                return dry(rep);
            }
            rep.put("vertices", net.n())
                .put("edges", net.edges().len())
                .put("w_max", net.w_max())
                .put("reversible", net.is_reversible())
                .put("mu", net.mu().to_vec());
        }
        GraphCmd::Reduce {
            g,
            keep,
            sparsify,
            levels,
            seed,
            out,
        } => {
            let net = load_graph(&g)?;
            let rule = keep_rule(&keep)?;
            if levels == 0 {
                return usage("--levels must be at least 1");
            }
            let seed = match rule {
                KeepRule::Roots(_) => Some(need_seed(seed)?),
                KeepRule::Fixed(ref k) => {
                    if levels != 1 {
                        return usage("a fixed vertex file supports a single level");
                    }
                    check_vertices(&net, k)?;
                    None
                }
            };
            if let Some(t) = sparsify {
                if !(t >= 0.0) {
                    return usage("--sparsify must be >= 0");
                }
            }
            if dry_run {
                return dry(rep);
            }
            let mut current = net;
            let mut ids: Vec<usize> = (0..current.n()).collect();
            for level in 1..=levels {
                let kept = match &rule {
                    KeepRule::Fixed(k) => k.clone(),
                    KeepRule::Roots(q) => {
                        let s = seed.expect("seed checked") ^ level as u64;
                        sampler::wilson_sample(&current, *q, &[], s)?.roots
                    }
                };
                if kept.len() == current.n() || current.n() < 2 {
                    rep.put("truncated_at_level", level);
                    break;
                }
                let mut reduced = coarse::schur_reduce(&current, &kept)?;
                if let Some(theta) = sparsify {
                    let r = kept.len() as f64;
                    let qp = 2.0 * current.w_max() * r / (current.n() as f64 - r);
                    let link = coarse::kernel_link(&current, &reduced.kept, qp)?;
                    reduced = coarse::sparsify(&current, &reduced, &link, theta)?;
                }
                ids = reduced.kept.iter().map(|&x| ids[x]).collect();
                let (tsv, map) = (level_path(&out, level, "tsv"), level_path(&out, level, "map"));
                let mut w = create(&tsv)?;
                fio::write_edge_list(&reduced.network, &mut w)?;
                w.flush()?;
                let mut w = create(&map)?;
                fio::write_vertex_map(&ids, &mut w)?;
                w.flush()?;
                rep.put(&format!("level{level}.vertices"), reduced.len())
                    .put(&format!("level{level}.edges"), reduced.edge_count())
                    .put(&format!("level{level}.graph"), tsv.display().to_string());
                current = reduced.network;
            }
        }
        GraphCmd::BetaGamma { g, keep } => {
            let net = load_graph(&g)?;
            let k = match keep_rule(&keep)? {
                KeepRule::Fixed(k) => k,
                KeepRule::Roots(_) => return usage("beta-gamma needs a vertex file"),
            };
            check_vertices(&net, &k)?;
            if dry_run {
                return dry(rep);
            }
            let bg = coarse::beta_gamma(&net, &k)?;
            rep.put("beta", bg.beta).put("gamma", bg.gamma);
        }
        GraphCmd::Metastable { g, blocks, q_prime } => {
            let net = load_graph(&g)?;
            let parsed: Vec<Vec<usize>> = blocks.split(';').map(ids).collect::<CliResult<_>>()?;
            if !(q_prime > 0.0) {
                return usage("--q-prime must be > 0");
            }
            if dry_run {
                return dry(rep);
            }
            let link = coarse::partition_link(&net, &parsed)?;
            let p = coarse::metastable_kernel(&net, &link, q_prime)?;
            for i in 0..p.nrows() {
                rep.put(&format!("kernel.{i}"), p.row(i).iter().copied().collect::<Vec<_>>());
            }
            rep.put("tv_error", coarse::intertwining_error_tv(&net, &link, &p, q_prime)?);
        }
    }
    Ok(())
}

fn load_signal_input(input: &SignalIn) -> CliResult<(Network, Vec<f64>, Option<ImageMeta>)> {
    if let Some(path) = &input.image {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Lib(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))?;
        let img = fio::parse_pgm(&bytes)?;
        let (net, f) = fio::ingest_image(&img)?;
        let meta = ImageMeta {
            width: img.width,
            height: img.height,
            maxval: img.maxval,
        };
        return Ok((net, f, Some(meta)));
    }
    let g = GraphIn {
        graph: input.graph.clone().expect("clap requires graph or image"),
        undirected: input.undirected,
    };
    let net = load_graph(&g)?;
    let path = input.signal.as_ref().expect("clap requires signal with graph");
    let f = fio::read_signal(open(path)?, net.n())?;
    Ok((net, f, None))
}

fn load_pyramid(path: &Path) -> CliResult<PyramidFile> {
    let file: PyramidFile = serde_json::from_reader(open(path)?).map_err(Error::from)?;
    if file.format != FILE_FORMAT || file.version != FILE_VERSION {
        return usage(format!("{} is not a version {FILE_VERSION} pyramid file", path.display()));
    }
    file.pyramid.validate()?;
    Ok(file)
}

fn save_pyramid(path: &Path, file: &PyramidFile) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, file).map_err(Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_outputs(
    signal: &[f64],
    image: Option<ImageMeta>,
    signal_out: Option<PathBuf>,
    image_out: Option<PathBuf>,
    rep: &mut Report,
) -> CliResult<()> {
    if let Some(path) = signal_out {
        let mut w = create(&path)?;
        fio::write_signal(signal, &mut w)?;
        w.flush()?;
        rep.put("signal_out", path.display().to_string());
    }
    if let Some(path) = image_out {
        let meta = match image {
            Some(m) => m,
            None => return usage("--image-out needs a pyramid built from an image"),
        };
        let img = fio::emit_image(signal, meta.width, meta.height, meta.maxval)?;
        create(&path)?.write_all(&fio::encode_pgm(&img, true))?;
        rep.put("image_out", path.display().to_string());
    }
    Ok(())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn run_signal(cmd: SignalCmd, dry_run: bool, rep: &mut Report) -> CliResult<()> {
    match cmd {
        SignalCmd::Analyze {
            input,
            levels,
            seed,
            out,
            sparsify,
            samples,
            q_grid,
        } => {
            let seed = need_seed(seed)?;
            if levels == 0 {
                return usage("--levels must be at least 1");
            }
            if samples == 0 {
                return usage("--samples must be at least 1");
            }
            let grid = q_grid.as_deref().map(floats).transpose()?;
            if grid.as_ref().is_some_and(|g| g.is_empty() || g.iter().any(|q| !(*q > 0.0))) {
                return usage("--q-grid needs positive rates");
            }
            if sparsify.is_some_and(|t| !(t >= 0.0)) {
                return usage("--sparsify must be >= 0");
            }
            let (net, f, image) = load_signal_input(&input)?;
            if dry_run {
                return dry(rep);
            }
            let config = PyramidConfig {
                q_grid: grid,
                tuning_samples: samples,
                sparsify,
                ..Default::default()
            };
            let pyr = wavelets::build_pyramid(&net, &f, levels, &config, seed)?;
            let err = max_abs_diff(&wavelets::reconstruct_pyramid(&pyr)?, &f);
            rep.put("levels", pyr.depth())
                .put("truncated", pyr.truncated)
                .put("sizes", {
                    let mut s: Vec<usize> = pyr.levels.iter().map(|l| l.network.n()).collect();
                    s.push(pyr.approximation.len());
                    s
                })
                .put("q", pyr.levels.iter().map(|l| l.q).collect::<Vec<_>>())
                .put("q_prime", pyr.levels.iter().map(|l| l.q_prime).collect::<Vec<_>>())
                .put("reconstruction_error", err)
                .put("out", out.display().to_string());
            save_pyramid(
                &out,
                &PyramidFile {
                    format: FILE_FORMAT.into(),
                    version: FILE_VERSION,
                    image,
                    pyramid: pyr,
                },
            )?;
        }
        SignalCmd::Compress {
            pyramid,
            keep,
            out,
            signal_out,
            image_out,
        } => {
            if !(0.0..=1.0).contains(&keep) {
                return usage("--keep must be in [0, 1]");
            }
            let file = load_pyramid(&pyramid)?;
            if dry_run {
                return dry(rep);
            }
            let c = wavelets::compress(&file.pyramid, keep)?;
            rep.put("kept_details", c.kept_details)
                .put("total_details", c.total_details)
                .put("relative_error", c.relative_error)
                .put("weight", file.pyramid.compression_weight.clone());
            write_outputs(&c.reconstruction, file.image, signal_out, image_out, rep)?;
            if let Some(path) = out {
                save_pyramid(
                    &path,
                    &PyramidFile {
                        pyramid: c.pyramid,
                        ..file
                    },
                )?;
                rep.put("out", path.display().to_string());
            }
        }
        SignalCmd::Reconstruct {
            pyramid,
            signal_out,
            image_out,
        } => {
            let file = load_pyramid(&pyramid)?;
            if dry_run {
                return dry(rep);
            }
            let f = wavelets::reconstruct_pyramid(&file.pyramid)?;
            rep.put("max_abs_error", max_abs_diff(&f, &file.pyramid.signal));
            write_outputs(&f, file.image, signal_out, image_out, rep)?;
        }
        SignalCmd::Curve { pyramid, steps, out } => {
            if steps == 0 {
                return usage("--steps must be at least 1");
            }
            let file = load_pyramid(&pyramid)?;
            if dry_run {
                return dry(rep);
            }
            let fractions: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
            let curve = wavelets::compression_curve(&file.pyramid, &fractions)?;
            let mut w = create(&out)?;
            writeln!(w, "keep_fraction,relative_error")?;
            for (t, e) in &curve {
                writeln!(w, "{t},{e}")?;
            }
            w.flush()?;
            rep.put("points", curve.len()).put("out", out.display().to_string());
        }
        SignalCmd::Bounds { pyramid, p } => {
            let p: Exponent = p.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
            let file = load_pyramid(&pyramid)?;
            if dry_run {
                return dry(rep);
            }
            let r = wavelets::stability_bounds(&file.pyramid, p)?;
            for (i, l) in r.levels.iter().enumerate() {
                rep.put(&format!("level{i}.approx_norm_bound"), l.approx_norm_bound)
                    .put(&format!("level{i}.detail_norm_bound"), l.detail_norm_bound)
                    .put(&format!("level{i}.detail_size"), l.detail_size)
                    .put(&format!("level{i}.detail_size_bound"), l.detail_size_bound);
            }
            rep.put("analysis_norm", r.analysis_norm)
                .put("analysis_bound", r.analysis_bound)
                .put("approximation_error", r.approximation_error)
                .put("jackson_bound", r.jackson_bound);
        }
    }
    Ok(())
}

fn run_tune(args: TuneArgs, dry_run: bool, rep: &mut Report) -> CliResult<()> {
    let seed = need_seed(args.seed)?;
    let net = load_graph(&args.g)?;
    let grid = match args.q_grid.as_deref() {
        Some(text) => floats(text)?,
        None => sampler::default_q_grid(&net),
    };
    if grid.is_empty() || grid.iter().any(|q| !(*q > 0.0)) {
        return usage("--q-grid needs positive rates");
    }
    if args.samples == 0 {
        return usage("--samples must be at least 1");
    }
    if dry_run {
        return dry(rep);
    }
    let records = sampler::estimate_tuning(&net, &grid, args.samples, seed)?;
    for (j, r) in records.iter().enumerate() {
        rep.put(
            &format!("grid.{j}"),
            format!(
                "q={} w_tilde={} inv_beta_tilde={} mean_roots={} objective={}",
                r.q,
                r.w_tilde,
                r.inv_beta_tilde,
                r.mean_roots,
                r.objective()
            ),
        );
    }
    let best = &records[sampler::select_rate(&records).expect("nonempty grid")];
    let n = net.n() as f64;
    rep.put("selected_q", best.q);
    if best.mean_roots < n {
        rep.put("q_prime", 2.0 * net.w_max() * best.mean_roots / (n - best.mean_roots));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<Report> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return usage("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut rep = Report::new();
    match cli.command {
        Command::Oracle(c) => run_oracle(c, cli.dry_run, &mut rep)?,
        Command::Forest(c) => run_forest(c, cli.dry_run, &mut rep)?,
        Command::Graph(c) => run_graph(c, cli.dry_run, &mut rep)?,
        Command::Signal(c) => run_signal(c, cli.dry_run, &mut rep)?,
        Command::Tune(a) => run_tune(a, cli.dry_run, &mut rep)?,
    }
    Ok(rep)
}

fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Usage(_) => 2,
        CliError::Lib(e) if e.is_io() => 3,
        CliError::Lib(e) if e.is_numerical() => 4,
        CliError::Lib(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(rep) => {
            print!("{}", rep.render(json));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = match &e {
                CliError::Usage(m) => m.clone(),
                CliError::Lib(err) => err.to_string(),
            };
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
