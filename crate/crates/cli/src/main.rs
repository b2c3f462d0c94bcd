use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use meloform::analysis::{analyze_notes, form_accuracy, pitch_control_accuracy};
use meloform::assembler::Assembler;
use meloform::form::{
    parse_form, parse_phrase_label, preset_form, random_preset_form, FormSpec, PresetKind,
};
use meloform::harmony::{CadenceRules, NGramTable};
use meloform::io::{
    export_json, export_midi, import_json, import_midi, prepare_corpus, RefinementRecord,
};
use meloform::refine::{
    default_controls, refine_melody, serve, BaselineRefiner, IdentityRefiner, Refiner,
    RemoteRefiner, DEFAULT_NUCLEUS_P,
};
use meloform::types::{Meta, Mode, PhraseLabel, PitchRange, Tonality};

const NGRAM_ENV: &str = "MELOFORM_NGRAM_TABLE";

#[derive(Parser)]
#[command(
    name = "meloform",
    version,
    about = "Melody generation with controlled musical form"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a melody from a form string or preset.
    Generate(GenerateArgs),
    /// Refine a melody phrase group by phrase group.
    Refine(RefineArgs),
    /// Detect phrases and their similarity in a MIDI or JSON melody.
    Analyze(AnalyzeArgs),
    /// Score every JSON melody in a directory against a form.
    Eval(EvalArgs),
    /// Write a synthetic corpus of masked refinement pairs.
    PrepareCorpus(CorpusArgs),
    /// Answer refinement requests on stdin with the baseline refiner.
    #[command(hide = true)]
    Serve(ServeArgs),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("shape").required(true).args(["form", "preset"]))]
struct GenerateArgs {
    #[arg(long)]
    form: Option<String>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<PresetKind>,
    /// Layout index within the preset family; random from the seed if absent.
    #[arg(long, requires = "preset")]
    preset_variant: Option<usize>,
    /// Tonic pitch class, 0 = C.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..12))]
    key: u8,
    #[arg(long, value_enum, default_value_t = ModeArg::Major)]
    mode: ModeArg,
    #[arg(long, default_value_t = 120)]
    tempo: u16,
    #[arg(long, default_value_t = 4)]
    phrase_bars: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Melody range as LO-HI in MIDI numbers.
    #[arg(long, default_value = "55-79", value_parser = parse_range)]
    pitch_range: PitchRange,
    /// End half cadences on the tonic chord instead of the dominant.
    #[arg(long)]
    half_cadence_on_tonic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Major,
    Minor,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Major => Mode::Major,
            ModeArg::Minor => Mode::Minor,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RefinerKind {
    Identity,
    Baseline,
    Remote,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    refiner: RefinerKind,
    /// Command line of a refiner process speaking the wire protocol.
    #[arg(long, conflicts_with = "remote_addr")]
    remote_cmd: Option<String>,
    /// host:port of a refiner speaking the wire protocol.
    #[arg(long)]
    remote_addr: Option<String>,
    #[arg(long, default_value_t = DEFAULT_NUCLEUS_P, value_parser = parse_probability)]
    nucleus_p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    midi: Option<PathBuf>,
    /// Per-label key for refinement, e.g. `b1=7:major`. Repeatable.
    #[arg(long, value_parser = parse_tonality_override)]
    tonality: Vec<(PhraseLabel, Tonality)>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    form: String,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated preset names; all four by default.
    #[arg(long, value_delimiter = ',', value_parser = parse_preset)]
    presets: Vec<PresetKind>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_preset(s: &str) -> Result<PresetKind, String> {
    s.parse()
        .map_err(|e: meloform::form::FormError| e.to_string())
}

fn parse_range(s: &str) -> Result<PitchRange, String> {
    let (lo, hi) = s.split_once('-').ok_or("expected LO-HI")?;
    let lo: u8 = lo
        .trim()
        .parse()
        .map_err(|_| format!("bad low pitch '{lo}'"))?;
    let hi: u8 = hi
        .trim()
        .parse()
        .map_err(|_| format!("bad high pitch '{hi}'"))?;
    if lo >= hi || hi > 127 {
        return Err(format!("{lo}-{hi} is not a valid range"));
    }
    Ok(PitchRange { lo, hi })
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("{p} is outside 0..1"))
    }
}

fn parse_tonality_override(s: &str) -> Result<(PhraseLabel, Tonality), String> {
    let (label, key) = s.split_once('=').ok_or("expected LABEL=PC:MODE")?;
    let label = parse_phrase_label(label.trim()).map_err(|e| e.to_string())?;
    let (pc, mode) = key.split_once(':').ok_or("expected PC:MODE")?;
    let pc: u8 = pc
        .trim()
        .parse()
        .map_err(|_| format!("bad pitch class '{pc}'"))?;
    if pc > 11 {
        return Err(format!("pitch class {pc} is outside 0..11"));
    }
    let mode: Mode = mode.trim().parse()?;
    Ok((label, Tonality::new(pc, mode)))
}

/// Data problems exit with 3; usage problems found after parsing exit with 2.
enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

fn assembler(half_cadence_on_tonic: bool) -> anyhow::Result<Assembler> {
    let mut table = NGramTable::builtin();
    if let Some(path) = std::env::var_os(NGRAM_ENV) {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", Path::new(&path).display()))?;
        table = table
            .with_overrides(&text)
            .with_context(|| format!("{NGRAM_ENV}={}", Path::new(&path).display()))?;
    }
    Ok(Assembler::new(
        table,
        CadenceRules {
            half_cadence_on_tonic,
        },
    ))
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let form: FormSpec = match (&args.form, args.preset) {
        (Some(text), _) => parse_form(text).map_err(|e| Failure::Usage(format!("--form: {e}")))?,
        (None, Some(kind)) => match args.preset_variant {
            Some(v) => preset_form(kind, v),
            None => random_preset_form(kind, &mut rng),
        },
        (None, None) => {
            return Err(Failure::Usage(
                "one of --form or --preset is required".into(),
            ))
        }
    };
    let PitchRange { lo, hi } = args.pitch_range;
    let meta = Meta::new(args.key, args.mode.into(), args.tempo, lo, hi)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let melody = assembler(args.half_cadence_on_tonic)?
        .generate(&form, &meta, args.phrase_bars, &mut rng)
        .context("generation failed")?;
    export_midi(&melody, &args.out).context("writing MIDI")?;
    if let Some(path) = &args.json {
        export_json(&melody, None, path).context("writing JSON")?;
    }
    log::info!("generated {} ({} phrases)", form, melody.phrase_count());
    Ok(())
}

fn refine(args: RefineArgs) -> Result<(), Failure> {
    let doc =
        import_json(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let melody = doc.melody().map_err(anyhow::Error::from)?;
    let form = melody.form();
    let overrides: BTreeMap<PhraseLabel, Tonality> = args.tonality.iter().copied().collect();
    let controls = default_controls(&melody, &assembler(false)?, &overrides);
    let mut refiner: Box<dyn Refiner> = match args.refiner {
        RefinerKind::Identity => Box::new(IdentityRefiner::new(melody.clone())),
        RefinerKind::Baseline => Box::new(BaselineRefiner::new(melody.meta.pitch_range, args.seed)),
        RefinerKind::Remote => match (&args.remote_cmd, &args.remote_addr) {
            (Some(cmd), None) => Box::new(RemoteRefiner::spawn(cmd).map_err(anyhow::Error::from)?),
            (None, Some(addr)) => {
                Box::new(RemoteRefiner::connect(addr).map_err(anyhow::Error::from)?)
            }
            _ => {
                return Err(Failure::Usage(
                    "--refiner remote needs exactly one of --remote-cmd or --remote-addr".into(),
                ))
            }
        },
    };
    let outcome = refine_melody(&melody, &form, refiner.as_mut(), &controls, args.nucleus_p)
        .map_err(|e| anyhow!("{} refiner: {e}", refiner.name()))?;
    for d in &outcome.diagnostics {
        log::warn!(
            "phrase {}: controls {:?} unreachable, used {:?}",
            d.phrase,
            d.requested,
            d.used
        );
    }
    let record = RefinementRecord {
        refiner: refiner.name().to_string(),
        seed: args.seed,
        nucleus_p: args.nucleus_p,
        controls: outcome.controls,
        diagnostics: outcome.diagnostics,
    };
    export_json(&outcome.melody, Some(record), &args.out).context("writing JSON")?;
    if let Some(path) = &args.midi {
        export_midi(&outcome.melody, path).context("writing MIDI")?;
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let is_midi = args
        .input
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"));
    let notes = if is_midi {
        import_midi(&args.input).map_err(anyhow::Error::from)?.notes
    } else {
        import_json(&args.input)
            .map_err(anyhow::Error::from)?
            .melody()
            .map_err(anyhow::Error::from)?
            .absolute_notes()
    };
    let report = analyze_notes(&notes).context("analysis failed")?;
    emit(serde_json::to_value(&report).context("encoding report")?)?;
    Ok(())
}

/// Pretty JSON on stdout; a closed pipe is not an error.
fn emit(value: serde_json::Value) -> anyhow::Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(&value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let form = parse_form(&args.form).map_err(|e| Failure::Usage(format!("--form: {e}")))?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(anyhow!("no JSON melodies in {}", args.input.display()).into());
    }
    let (mut forms, mut avgs, mut spans) = (Vec::new(), Vec::new(), Vec::new());
    let mut declared = 0;
    let mut rows = Vec::new();
    for path in &files {
        let doc = import_json(path).with_context(|| format!("reading {}", path.display()))?;
        let melody = doc.melody().map_err(anyhow::Error::from)?;
        let accuracy = form_accuracy(&melody, &form).with_context(|| path.display().to_string())?;
        forms.push(accuracy);
        let mut row = json!({ "file": path.file_name().map(|f| f.to_string_lossy()), "form_accuracy": accuracy });
        if let Some(record) = &doc.refinement {
            let phrases: Vec<_> = melody.phrases().cloned().collect();
            let targets: Vec<(u8, u8)> = record
                .controls
                .iter()
                .map(|c| (c.avgpitch, c.span))
                .collect();
            let (avg, span) = pitch_control_accuracy(&phrases, &targets)
                .with_context(|| path.display().to_string())?;
            avgs.push(avg);
            spans.push(span);
            declared += record.diagnostics.len();
            row["avgpitch_accuracy"] = json!(avg);
            row["span_accuracy"] = json!(span);
        }
        rows.push(row);
    }
    let report = json!({
        "form": form.to_string(),
        "files": rows,
        "form_accuracy": mean(&forms),
        "avgpitch_accuracy": mean(&avgs),
        "span_accuracy": mean(&spans),
        "declared_infeasible": declared,
    });
    emit(report)?;
    Ok(())
}

fn corpus(args: CorpusArgs) -> Result<(), Failure> {
    let presets = if args.presets.is_empty() {
        PresetKind::ALL.to_vec()
    } else {
        args.presets
    };
    if args.n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let manifest =
        prepare_corpus(args.n, &presets, &args.out, args.seed).map_err(anyhow::Error::from)?;
    emit(serde_json::to_value(&manifest).context("encoding manifest")?)?;
    Ok(())
}

fn serve_stdio(args: ServeArgs) -> Result<(), Failure> {
    let mut refiner = BaselineRefiner {
        seed: args.seed,
        ..BaselineRefiner::default()
    };
    let stdin = std::io::stdin();
    serve(&mut refiner, stdin.lock(), std::io::stdout().lock()).context("serving")?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Refine(a) => refine(a),
        Command::Analyze(a) => analyze(a),
        Command::Eval(a) => eval(a),
        Command::PrepareCorpus(a) => corpus(a),
        Command::Serve(a) => serve_stdio(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
