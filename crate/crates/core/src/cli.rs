//! Command-line surface: catalog browsing, counting, fiber histograms,
//! collection, reduction certificates, and bulk bound verification.
//!
//! Exit codes: 0 — success and all asserted bounds hold; 1 — a bound or
//! invariant violation was found (reported with full reproduction data;
//! this would be a counterexample and signals an implementation bug);
//! 2 — usage or input error.

use std::collections::BTreeMap;
use std::io::Write;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::count::{count_solutions, fiber_histogram, CountConfig, Restriction};
use crate::groups::{
    acceptance_corpus, builder_listing, default_corpus, parse_group_file, GroupSpec, GroupTable,
    LoadPolicy, DEFAULT_ORDER_CAP,
};
use crate::nf2::{collect, NormalForm2};
use crate::reduce::{build_certificate, verify_bound, Mode};
use crate::words::{max_var_index, parse_word, Exponent, Word};

/// Runtime configuration shared by all subcommands. The seed fully
/// determines every sampled word corpus.
#[derive(Clone, Copy, Debug)]
pub struct Config {
    pub cap: u128,
    pub workers: usize,
    pub seed: u64,
    pub format: OutputFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    Bound,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Bound => Mode::Bound,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "vcount",
    version,
    about = "Count solutions of word equations w = 1 in finite class-<=2 nilpotent groups,\n\
             with reduction certificates and lower-bound verification"
)]
struct Cli {
    /// Output format (json is the machine format)
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,

    /// Evaluation cap: maximum tuples a single counting call may enumerate
    #[arg(long, global = true, default_value_t = 1_000_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    cap: u64,

    /// Worker threads (defaults to the VC_THREADS env var, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for sampled word corpora
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// List the catalog builders and the default group corpus
    Catalog,
    /// Count solutions of w = 1 over a restricted tuple space
    Count {
        /// Catalog group name, e.g. Q8, C8, heisenberg(3), Q8xC2
        #[arg(long, conflicts_with = "group_file")]
        group: Option<String>,
        /// Load the group from a Cayley-table file instead
        #[arg(long)]
        group_file: Option<String>,
        #[arg(long)]
        word: String,
        /// Number of variables (default: largest index used in the word)
        #[arg(long)]
        nvars: Option<usize>,
        /// Restriction spec, e.g. "1:derived" for G' x G^(n-1)
        #[arg(long)]
        restrict: Option<String>,
        /// Count even if the search space exceeds the cap
        #[arg(long)]
        force: bool,
        /// Accept non-p-groups and class > 2 from --group-file
        #[arg(long = "unsafe")]
        unsafe_load: bool,
    },
    /// Fiber sizes of the verbal map over the full space
    Fibers {
        #[arg(long, conflicts_with = "group_file")]
        group: Option<String>,
        #[arg(long)]
        group_file: Option<String>,
        #[arg(long)]
        word: String,
        #[arg(long)]
        nvars: Option<usize>,
        #[arg(long)]
        force: bool,
        #[arg(long = "unsafe")]
        unsafe_load: bool,
    },
    /// Collect a word into class-2 normal form
    Collect {
        #[arg(long)]
        word: String,
        #[arg(long)]
        nvars: usize,
        /// Reduce all exponents into [0, M)
        #[arg(long)]
        modulus: Option<u64>,
    },
    /// Emit the reduction certificate for a word
    Certificate {
        #[arg(long, conflicts_with = "group_file")]
        group: Option<String>,
        #[arg(long)]
        group_file: Option<String>,
        #[arg(long)]
        word: String,
        #[arg(long)]
        nvars: Option<usize>,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
        #[arg(long = "unsafe")]
        unsafe_load: bool,
    },
    /// Check the solution-count bound on sampled words (default: whole corpus)
    Verify {
        /// Restrict to one catalog group (default: the standard corpus)
        #[arg(long, conflicts_with = "group_file")]
        group: Option<String>,
        #[arg(long)]
        group_file: Option<String>,
        /// Sampled words per group
        #[arg(long, default_value_t = 500)]
        samples: usize,
        /// Maximum variable count of sampled words
        #[arg(long, default_value_t = 3)]
        nvars: usize,
        #[arg(long = "unsafe")]
        unsafe_load: bool,
    },
}

/// Entry point used by `main`.
pub fn run_from_env() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    run(&args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// Run the CLI on an explicit argument vector, writing to the given streams.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version as "errors" with success status
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                return 2;
            }
            let _ = write!(out, "{rendered}");
            return 0;
        }
    };
    let workers = cli.threads.unwrap_or_else(|| {
        std::env::var("VC_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    });
    let config = Config {
        cap: cli.cap as u128,
        workers,
        seed: cli.seed,
        format: cli.format,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot build thread pool: {e}");
            return 2;
        }
    };
    let (result, buf) = pool.install(|| {
        let mut buf: Vec<u8> = Vec::new();
        let result = dispatch(&cli.cmd, &config, &mut buf);
        (result, buf)
    });
    let _ = out.write_all(&buf);
    match result {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
    }
}

fn dispatch(cmd: &Cmd, config: &Config, out: &mut dyn Write) -> Result<i32, String> {
    match cmd {
        Cmd::Catalog => cmd_catalog(config, out),
        Cmd::Count {
            group,
            group_file,
            word,
            nvars,
            restrict,
            force,
            unsafe_load,
        } => {
            let g = resolve_group(group, group_file, *unsafe_load)?;
            cmd_count(config, &g, word, *nvars, restrict.as_deref(), *force, out)
        }
        Cmd::Fibers {
            group,
            group_file,
            word,
            nvars,
            force,
            unsafe_load,
        } => {
            let g = resolve_group(group, group_file, *unsafe_load)?;
            cmd_fibers(config, &g, word, *nvars, *force, out)
        }
        Cmd::Collect {
            word,
            nvars,
            modulus,
        } => cmd_collect(config, word, *nvars, *modulus, out),
        Cmd::Certificate {
            group,
            group_file,
            word,
            nvars,
            mode,
            unsafe_load,
        } => {
            let g = resolve_group(group, group_file, *unsafe_load)?;
            cmd_certificate(config, &g, word, *nvars, (*mode).into(), out)
        }
        Cmd::Verify {
            group,
            group_file,
            samples,
            nvars,
            unsafe_load,
        } => {
            let groups = match (group, group_file) {
                (None, None) => acceptance_corpus(),
                _ => vec![resolve_group(group, group_file, *unsafe_load)?],
            };
            cmd_verify(config, &groups, *samples, *nvars, out)
        }
    }
}

fn resolve_group(
    group: &Option<String>,
    group_file: &Option<String>,
    unsafe_load: bool,
) -> Result<GroupTable, String> {
    match (group, group_file) {
        (Some(name), None) => GroupSpec::parse(name)
            .and_then(|s| s.build(DEFAULT_ORDER_CAP))
            .map_err(|e| e.to_string()),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
            let policy = if unsafe_load {
                LoadPolicy::Unsafe
            } else {
                LoadPolicy::Strict
            };
            parse_group_file(&text, policy).map_err(|e| e.to_string())
        }
        (None, None) => Err("one of --group or --group-file is required".into()),
        (Some(_), Some(_)) => Err("pass only one of --group and --group-file".into()),
    }
}

fn parse_cli_word(text: &str, nvars: Option<usize>) -> Result<Word, String> {
    let used = max_var_index(text).map_err(|e| e.to_string())?;
    let n = match nvars {
        Some(n) if n < used => {
            return Err(format!(
                "--nvars {n} is below the largest index x{used} in the word"
            ))
        }
        Some(n) => n,
        None => used,
    };
    parse_word(text, n).map_err(|e| e.to_string())
}

fn emit(
    config: &Config,
    out: &mut dyn Write,
    value: &serde_json::Value,
    text: &str,
) -> Result<(), String> {
    let res = match config.format {
        OutputFormat::Json => writeln!(out, "{value}"),
        OutputFormat::Text => writeln!(out, "{text}"),
    };
    res.map_err(|e| e.to_string())
}

fn cmd_catalog(config: &Config, out: &mut dyn Write) -> Result<i32, String> {
    let builders: Vec<serde_json::Value> = builder_listing()
        .iter()
        .map(|(name, desc)| json!({"name": name, "description": desc}))
        .collect();
    let corpus: Vec<serde_json::Value> = default_corpus()
        .iter()
        .map(|g| {
            json!({
                "name": g.name(),
                "order": g.order(),
                "prime": g.prime(),
                "class2": g.is_class2(),
            })
        })
        .collect();
    let mut text = String::from("builders:\n");
    for (name, desc) in builder_listing() {
        text.push_str(&format!("  {name:28} {desc}\n"));
    }
    text.push_str("default corpus:\n");
    for g in default_corpus() {
        text.push_str(&format!(
            "  {:24} order {:4} prime {}\n",
            g.name(),
            g.order(),
            g.prime().map_or("-".into(), |p| p.to_string()),
        ));
    }
    emit(
        config,
        out,
        &json!({"builders": builders, "corpus": corpus}),
        text.trim_end(),
    )?;
    Ok(0)
}

fn cmd_count(
    config: &Config,
    g: &GroupTable,
    word_text: &str,
    nvars: Option<usize>,
    restrict: Option<&str>,
    force: bool,
    out: &mut dyn Write,
) -> Result<i32, String> {
    let word = parse_cli_word(word_text, nvars)?;
    let n = word.nvars();
    let restriction = match restrict {
        Some(spec) => Restriction::parse(spec, g, n).map_err(|e| e.to_string())?,
        None => Restriction::full(g, n),
    };
    let cfg = CountConfig {
        cap: config.cap,
        force,
    };
    let res = count_solutions(g, &word, &restriction, &cfg).map_err(|e| e.to_string())?;
    let record = json!({
        "word": word.to_string(),
        "group": g.name(),
        "n": n,
        "count": u128_field(res.count)?,
        "bound": u128_field(res.bound)?,
        "bound_ok": res.bound_ok,
        "space": u128_field(res.search_space)?,
    });
    let text = format!(
        "N({}, {}) = {}  [space {}, bound {} -> {}]",
        g.name(),
        word,
        res.count,
        res.search_space,
        res.bound,
        if res.bound_ok { "ok" } else { "VIOLATED" }
    );
    emit(config, out, &record, &text)?;
    // the bound is asserted only for the full space on in-scope groups
    let asserted = restriction.is_full() && g.is_class2();
    Ok(if asserted && !res.bound_ok { 1 } else { 0 })
}

fn cmd_fibers(
    config: &Config,
    g: &GroupTable,
    word_text: &str,
    nvars: Option<usize>,
    force: bool,
    out: &mut dyn Write,
) -> Result<i32, String> {
    let word = parse_cli_word(word_text, nvars)?;
    let cfg = CountConfig {
        cap: config.cap,
        force,
    };
    let hist = fiber_histogram(g, &word, &cfg).map_err(|e| e.to_string())?;
    let fibers: Vec<serde_json::Value> = hist
        .iter()
        .enumerate()
        .map(|(e, &size)| {
            Ok(json!({
                "element": e,
                "name": g.element_name(e),
                "size": u128_field(size)?,
            }))
        })
        .collect::<Result<_, String>>()?;
    let record = json!({
        "word": word.to_string(),
        "group": g.name(),
        "n": word.nvars(),
        "space": u128_field(hist.iter().sum())?,
        "fibers": fibers,
    });
    let mut text = format!("fibers of {} on {}:\n", word, g.name());
    for (e, size) in hist.iter().enumerate() {
        text.push_str(&format!("  {:6} {}\n", g.element_name(e), size));
    }
    emit(config, out, &record, text.trim_end())?;
    Ok(0)
}

fn cmd_collect(
    config: &Config,
    word_text: &str,
    nvars: usize,
    modulus: Option<u64>,
    out: &mut dyn Write,
) -> Result<i32, String> {
    let word = parse_word(word_text, nvars).map_err(|e| e.to_string())?;
    let mut nf = collect(&word);
    if let Some(m) = modulus {
        nf = nf.reduce_exponents_mod(m).map_err(|e| e.to_string())?;
    }
    let record = json!({
        "word": word.to_string(),
        "nvars": nvars,
        "modulus": modulus,
        "normal_form": nf.to_string(),
    });
    emit(config, out, &record, &nf.to_string())?;
    Ok(0)
}

fn cmd_certificate(
    config: &Config,
    g: &GroupTable,
    word_text: &str,
    nvars: Option<usize>,
    mode: Mode,
    out: &mut dyn Write,
) -> Result<i32, String> {
    let word = parse_cli_word(word_text, nvars)?;
    let cert = build_certificate(g, &word, mode).map_err(|e| e.to_string())?;
    let value = serde_json::to_value(&cert).map_err(|e| e.to_string())?;
    let text = format!(
        "certificate[{:?}] for {} on {}: value {} vs bound {} -> {} ({} steps)",
        cert.mode,
        word,
        g.name(),
        cert.value,
        cert.bound,
        if cert.holds { "holds" } else { "VIOLATED" },
        cert.steps.len()
    );
    emit(config, out, &value, &text)?;
    Ok(if cert.holds { 0 } else { 1 })
}

/// Draw a uniform normal-form word: every generator and commutator exponent
/// uniform in `[0, modulus)`.
pub fn sample_normal_form_word(rng: &mut impl Rng, nvars: usize, modulus: u64) -> Word {
    let gens: Vec<Exponent> = (0..nvars)
        .map(|_| rng.gen_range(0..modulus) as Exponent)
        .collect();
    let mut comms = BTreeMap::new();
    for i in 1..=nvars {
        for j in (i + 1)..=nvars {
            let e = rng.gen_range(0..modulus);
            if e != 0 {
                comms.insert((i, j), e as Exponent);
            }
        }
    }
    NormalForm2::from_parts(nvars, gens, comms, Some(modulus))
        .unwrap()
        .to_word()
}

fn cmd_verify(
    config: &Config,
    groups: &[GroupTable],
    samples: usize,
    nvars_max: usize,
    out: &mut dyn Write,
) -> Result<i32, String> {
    let cfg = CountConfig {
        cap: config.cap,
        force: false,
    };
    let mut group_records = Vec::new();
    let mut violations = Vec::new();
    let mut text = String::new();
    for g in groups {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut bad = 0usize;
        for idx in 0..samples {
            let n = rng.gen_range(1..=nvars_max);
            let word = sample_normal_form_word(&mut rng, n, g.order() as u64);
            let report = verify_bound(g, &word, &cfg).map_err(|e| e.to_string())?;
            if !report.holds {
                bad += 1;
                violations.push(json!({
                    "group": g.name(),
                    "sample": idx,
                    "seed": config.seed,
                    "report": serde_json::to_value(&report).map_err(|e| e.to_string())?,
                }));
            }
        }
        group_records.push(json!({
            "group": g.name(),
            "order": g.order(),
            "samples": samples,
            "violations": bad,
        }));
        text.push_str(&format!(
            "{:24} order {:4} samples {:5} violations {}\n",
            g.name(),
            g.order(),
            samples,
            bad
        ));
    }
    let ok = violations.is_empty();
    let record = json!({
        "seed": config.seed,
        "samples_per_group": samples,
        "groups": group_records,
        "violations": violations,
        "ok": ok,
    });
    text.push_str(if ok {
        "all bounds hold"
    } else {
        "BOUND VIOLATIONS FOUND"
    });
    emit(config, out, &record, &text)?;
    Ok(if ok { 0 } else { 1 })
}

fn u128_field(v: u128) -> Result<u64, String> {
    u64::try_from(v).map_err(|_| format!("value {v} does not fit in a JSON integer field"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_vec(args: &[&str]) -> (i32, String, String) {
        let argv: Vec<String> = std::iter::once("vcount")
            .chain(args.iter().copied())
            .map(String::from)
            .collect();
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(&argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn count_q8_commutator() {
        let (code, out, _) = run_vec(&["count", "--group", "Q8", "--word", "[x1,x2]"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["count"], 40);
        assert_eq!(v["bound"], 8);
        assert_eq!(v["bound_ok"], true);
        assert_eq!(v["space"], 64);
    }

    #[test]
    fn count_c2_single_variable() {
        let (code, out, _) = run_vec(&["count", "--group", "C2", "--word", "x1"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["count"], 1);
        assert_eq!(v["bound"], 1);
        assert_eq!(v["bound_ok"], true);
    }

    #[test]
    fn count_with_restriction() {
        let (code, out, _) = run_vec(&[
            "count",
            "--group",
            "Q8",
            "--word",
            "x1^2 [x2,x3]",
            "--restrict",
            "1:derived",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["count"], 80);
        assert_eq!(v["space"], 128);
    }

    #[test]
    fn collect_command() {
        let (code, out, _) = run_vec(&["collect", "--word", "x1 x2 x1", "--nvars", "2"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["normal_form"], "x1^2 x2^1 [x1,x2]^-1");

        let (code, out, _) = run_vec(&[
            "collect",
            "--word",
            "x1 x2 x1",
            "--nvars",
            "2",
            "--modulus",
            "8",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["normal_form"], "x1^2 x2^1 [x1,x2]^7");
    }

    #[test]
    fn fibers_command() {
        let (code, out, _) = run_vec(&["fibers", "--group", "C4", "--word", "x1^2"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let sizes: Vec<u64> = v["fibers"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| f["size"].as_u64().unwrap())
            .collect();
        assert_eq!(sizes, vec![2, 0, 2, 0]);
    }

    #[test]
    fn certificate_command() {
        let (code, out, _) = run_vec(&[
            "certificate",
            "--group",
            "Q8",
            "--word",
            "x1^2 x2^2 [x1,x2]^3",
            "--mode",
            "bound",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["mode"], "bound");
        assert_eq!(v["holds"], true);
        assert!(v["steps"].as_array().unwrap().len() >= 2);
    }

    #[test]
    fn verify_small_run() {
        let (code, out, _) =
            run_vec(&["verify", "--group", "Q8", "--samples", "12", "--seed", "7"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["ok"], true);
        assert_eq!(v["groups"][0]["violations"], 0);
    }

    #[test]
    fn verify_default_corpus_exits_zero() {
        let (code, out, _) = run_vec(&["verify", "--samples", "10", "--seed", "1"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["ok"], true);
        assert_eq!(v["groups"].as_array().unwrap().len(), 9);
    }

    #[test]
    fn catalog_lists_builders() {
        let (code, out, _) = run_vec(&["catalog"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v["builders"].as_array().unwrap().len() >= 8);
        assert!(v["corpus"]
            .as_array()
            .unwrap()
            .iter()
            .any(|g| g["name"] == "Q8"));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_vec(&["frobnicate"]).0, 2);
        assert_eq!(run_vec(&["count", "--word", "x1"]).0, 2); // missing group
        assert_eq!(run_vec(&["count", "--group", "nope", "--word", "x1"]).0, 2);
        assert_eq!(run_vec(&["count", "--group", "Q8", "--word", "x1 )"]).0, 2);
        assert_eq!(
            run_vec(&["count", "--group", "Q8", "--word", "[x1,x2]", "--cap", "10"]).0,
            2
        );
        assert_eq!(
            run_vec(&["count", "--group", "Q8", "--word", "x1", "--nvars", "0"]).0,
            2
        );
        assert_eq!(
            run_vec(&["--cap", "0", "count", "--group", "Q8", "--word", "x1"]).0,
            2
        );
    }

    #[test]
    fn force_overrides_cap() {
        let (code, out, _) = run_vec(&[
            "count", "--group", "Q8", "--word", "[x1,x2]", "--cap", "10", "--force",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["count"], 40);
    }

    #[test]
    fn identical_argv_is_byte_identical_across_workers() {
        let args = ["verify", "--group", "D4", "--samples", "10", "--seed", "3"];
        let mut outputs = Vec::new();
        for threads in ["1", "2", "8"] {
            let mut full = vec!["--threads", threads];
            full.extend_from_slice(&args);
            let (code, out, _) = run_vec(&full);
            assert_eq!(code, 0);
            outputs.push(out);
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[0], outputs[2]);
    }

    #[test]
    fn text_format_is_human_oriented() {
        let (code, out, _) = run_vec(&[
            "--format", "text", "count", "--group", "Q8", "--word", "[x1,x2]",
        ]);
        assert_eq!(code, 0);
        assert!(out.contains("N(Q8, [x1,x2]) = 40"));
    }

    #[test]
    fn group_file_loading() {
        let dir = std::env::temp_dir().join(format!("vcount-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("q8.group");
        let q8 = GroupSpec::parse("Q8")
            .unwrap()
            .build(DEFAULT_ORDER_CAP)
            .unwrap();
        std::fs::write(&path, q8.to_file_string()).unwrap();
        let (code, out, _) = run_vec(&[
            "count",
            "--group-file",
            path.to_str().unwrap(),
            "--word",
            "[x1,x2]",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["count"], 40);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn unsafe_flag_gates_out_of_scope_groups() {
        // S3 built as a permutation table: class 3, rejected without --unsafe
        let perms: Vec<[usize; 3]> = vec![
            [0, 1, 2],
            [1, 0, 2],
            [0, 2, 1],
            [2, 1, 0],
            [1, 2, 0],
            [2, 0, 1],
        ];
        let compose = |a: &[usize; 3], b: &[usize; 3]| [b[a[0]], b[a[1]], b[a[2]]];
        let mut text = String::from("order 6\nname S3\n");
        for a in &perms {
            let row: Vec<String> = perms
                .iter()
                .map(|b| {
                    let c = compose(a, b);
                    perms.iter().position(|p| *p == c).unwrap().to_string()
                })
                .collect();
            text.push_str(&row.join(" "));
            text.push('\n');
        }
        let dir = std::env::temp_dir().join(format!("vcount-unsafe-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s3.group");
        std::fs::write(&path, text).unwrap();
        let p = path.to_str().unwrap();

        let (code, _, err) = run_vec(&["count", "--group-file", p, "--word", "[x1,x2]"]);
        assert_eq!(code, 2);
        assert!(err.contains("class"));

        let (code, out, _) =
            run_vec(&["count", "--group-file", p, "--word", "[x1,x2]", "--unsafe"]);
        assert_eq!(code, 0, "counting works on unsafe-loaded groups");
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        // 3 conjugacy classes * 6 commuting pairs... independent: S3 has 3
        // classes, so 3 * 6 = 18 commuting pairs
        assert_eq!(v["count"], 18);

        // reduction machinery refuses it even when loaded
        let (code, _, err) =
            run_vec(&["certificate", "--group-file", p, "--word", "x1", "--unsafe"]);
        assert_eq!(code, 2);
        assert!(err.contains("class"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
