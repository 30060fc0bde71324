use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use hmhe::baselines::{clahe, he, ssr, ClaheParams, SsrParams};
use hmhe::enhance::{hmhe_pipeline, PipelineConfig, Warning};
use hmhe::fogsim::{corpus, synthesize_fog, ClearSource, SceneRecipe};
use hmhe::image::{stretch_to_levels, ImageBuffer};
use hmhe::metrics::{MetricsReport, MetricsRow};
use hmhe::sdif::{select_cutoff_kernel, ssim_sweep, SweepOptions, SweepRange};
use hmhe::{load_image, save_image, BitDepth};
use rayon::prelude::*;
use serde::Deserialize;

use crate::manifest::{load_config, InputRecord, RunManifest};

/// How a command ended, mapped onto the process exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or configuration: exit 2.
    Usage(String),
    /// Some inputs failed and were skipped: exit 1.
    Partial(usize),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Partial(_) => 1,
        }
    }
}

pub type Outcome = Result<(), Failure>;

/// Flags shared by every command that runs the pipeline.
#[derive(Debug, Clone, Default)]
pub struct PipelineFlags {
    pub config: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub kernel: Option<usize>,
    pub no_sweep: bool,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

impl PipelineFlags {
    pub fn resolve(&self) -> Result<PipelineConfig, Failure> {
        let mut cfg = load_config(self.config.as_deref()).map_err(Failure::Usage)?;
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(k) = self.kernel {
            cfg.kernel = Some(k);
        }
        if let Some(s) = self.seed {
            cfg.noise_seed = s;
        }
        if self.no_sweep && cfg.kernel.is_none() {
            return Err(Failure::Usage("--no-sweep needs a fixed kernel (--kernel or config)".into()));
        }
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Failure> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.unwrap_or(0))
            .build()
            .map_err(|e| Failure::Usage(e.to_string()))
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

/// Keeps PGM inputs as PGM; everything else is written as PNG.
fn extension(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pgm") | Some("pnm") => "pgm",
        _ => "png",
    }
}

fn save(img: &ImageBuffer, path: &Path) -> Result<(), String> {
    save_image(img, path, BitDepth::for_levels(img.levels())).map_err(|e| e.to_string())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))
}

fn warning_name(w: &Warning) -> String {
    serde_json::to_value(w)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

fn finish(manifest: RunManifest, path: &Path, failures: usize) -> Outcome {
    manifest.write(path).map_err(Failure::Usage)?;
    if failures > 0 {
        Err(Failure::Partial(failures))
    } else {
        Ok(())
    }
}

pub struct EnhanceArgs {
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    pub emit_intermediates: bool,
    pub flags: PipelineFlags,
}

pub fn enhance(args: &EnhanceArgs) -> Outcome {
    let cfg = args.flags.resolve()?;
    create_dir(&args.output)?;
    let pool = args.flags.pool()?;
    let results: Vec<(InputRecord, Vec<PathBuf>)> = pool.install(|| {
        args.inputs
            .par_iter()
            .map(|input| match enhance_one(input, &args.output, args.emit_intermediates, &cfg) {
                Ok((record, outputs)) => (record, outputs),
                Err(e) => {
                    log::error!("{}: {e}", input.display());
                    (
                        InputRecord { path: input.clone(), ok: false, error: Some(e), k_cutoff: None, warnings: vec![] },
                        vec![],
                    )
                }
            })
            .collect()
    });
    let mut manifest = RunManifest::new("enhance", cfg);
    let mut failures = 0;
    for (record, outputs) in results {
        failures += usize::from(!record.ok);
        manifest.inputs.push(record);
        manifest.outputs.extend(outputs);
    }
    finish(manifest, &args.output.join("manifest.json"), failures)
}

fn enhance_one(
    input: &Path,
    out_dir: &Path,
    intermediates: bool,
    cfg: &PipelineConfig,
) -> Result<(InputRecord, Vec<PathBuf>), String> {
    let img = load_image(input).map_err(|e| e.to_string())?;
    let result = hmhe_pipeline(&img, cfg).map_err(|e| e.to_string())?;
    let (name, ext) = (stem(input), extension(input));
    let mut outputs = Vec::new();
    let enhanced = out_dir.join(format!("{name}_hmhe.{ext}"));
    save(&result.enhanced, &enhanced)?;
    outputs.push(enhanced);
    if intermediates {
        let illu = out_dir.join(format!("{name}_illumination.{ext}"));
        save(&result.illumination, &illu)?;
        let homo = out_dir.join(format!("{name}_homogeneous.{ext}"));
        save(&stretch_to_levels(&result.homogeneous, img.levels()), &homo)?;
        outputs.extend([illu, homo]);
        if let (Some(curve), Some(j)) = (&result.curve, &result.objective) {
            let csv_path = out_dir.join(format!("{name}_sweep.csv"));
            let file = File::create(&csv_path).map_err(|e| format!("{}: {e}", csv_path.display()))?;
            curve.write_csv(j, BufWriter::new(file)).map_err(|e| e.to_string())?;
            outputs.push(csv_path);
        }
    }
    let record = InputRecord {
        path: input.to_path_buf(),
        ok: true,
        error: None,
        k_cutoff: Some(result.k_cutoff),
        warnings: result.warnings.iter().map(warning_name).collect(),
    };
    Ok((record, outputs))
}

pub struct SweepArgs {
    pub input: PathBuf,
    pub range: SweepRange,
    pub output: PathBuf,
    pub flags: PipelineFlags,
}

pub fn sweep(args: &SweepArgs) -> Outcome {
    let mut cfg = args.flags.resolve()?;
    cfg.sweep = SweepRange {
        k_min: args.range.k_min.or(cfg.sweep.k_min),
        k_max: args.range.k_max.or(cfg.sweep.k_max),
        stride: args.range.stride.or(cfg.sweep.stride),
    };
    let img = load_image(&args.input).map_err(|e| Failure::Usage(e.to_string()))?;
    let opts = SweepOptions { ssim: cfg.ssim_constants, boundary: cfg.boundary, fast: cfg.fast_sweep };
    let curve = ssim_sweep(&img, &cfg.sweep, &opts).map_err(|e| Failure::Usage(e.to_string()))?;
    let sel = select_cutoff_kernel(&curve, &cfg.sdif_weights).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(dir) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let file = File::create(&args.output).map_err(|e| Failure::Usage(format!("{}: {e}", args.output.display())))?;
    curve
        .write_csv(&sel.objective, BufWriter::new(file))
        .map_err(|e| Failure::Usage(e.to_string()))?;
    if sel.degenerate {
        log::warn!("{}: flat SSIM curve", args.input.display());
    }
    let mut manifest = RunManifest::new("sweep", cfg);
    manifest.inputs.push(InputRecord {
        path: args.input.clone(),
        ok: true,
        error: None,
        k_cutoff: Some(sel.k_cutoff),
        warnings: if sel.degenerate { vec!["degenerate_curve".into()] } else { vec![] },
    });
    manifest.outputs.push(args.output.clone());
    manifest.extra = serde_json::json!({ "k_cutoff": sel.k_cutoff, "degenerate_curve": sel.degenerate });
    finish(manifest, &args.output.with_extension("manifest.json"), 0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Original,
    He,
    Clahe,
    Ssr,
    Hmhe,
    External(PathBuf),
}

impl Method {
    pub fn parse(text: &str) -> Result<Self, String> {
        Ok(match text {
            "original" => Method::Original,
            "he" => Method::He,
            "clahe" => Method::Clahe,
            "ssr" => Method::Ssr,
            "hmhe" => Method::Hmhe,
            other => match other.strip_prefix("external:") {
                Some(dir) if !dir.is_empty() => Method::External(PathBuf::from(dir)),
                _ => return Err(format!("unknown method '{other}'")),
            },
        })
    }

    fn label(&self) -> String {
        match self {
            Method::Original => "original".into(),
            Method::He => "he".into(),
            Method::Clahe => "clahe".into(),
            Method::Ssr => "ssr".into(),
            Method::Hmhe => "hmhe".into(),
            Method::External(dir) => {
                let name = dir.file_name().map_or_else(|| dir.to_string_lossy(), |n| n.to_string_lossy());
                format!("external:{name}")
            }
        }
    }

    fn run(&self, input: &Path, img: &ImageBuffer, cfg: &PipelineConfig) -> Result<ImageBuffer, String> {
        let e = |err: hmhe::Error| err.to_string();
        match self {
            Method::Original => Ok(img.clone()),
            Method::He => he(img).map_err(e),
            Method::Clahe => clahe(img, &ClaheParams::default()).map_err(e),
            Method::Ssr => ssr(img, &SsrParams::default()).map_err(e),
            Method::Hmhe => hmhe_pipeline(img, cfg).map(|r| r.enhanced).map_err(e),
            Method::External(dir) => load_image(sibling(dir, input)?).map_err(e),
        }
    }
}

/// File in `dir` with the same name as `input`, or the same stem as PNG/PGM.
fn sibling(dir: &Path, input: &Path) -> Result<PathBuf, String> {
    let name = input.file_name().ok_or_else(|| format!("{}: no file name", input.display()))?;
    let stem = stem(input);
    [dir.join(name), dir.join(format!("{stem}.png")), dir.join(format!("{stem}.pgm"))]
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| format!("no counterpart of {} in {}", input.display(), dir.display()))
}

pub struct CompareArgs {
    pub reference: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub methods: Vec<String>,
    pub output: PathBuf,
    pub flags: PipelineFlags,
}

pub fn compare(args: &CompareArgs) -> Outcome {
    let cfg = args.flags.resolve()?;
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|m| Method::parse(m))
        .collect::<Result<_, _>>()
        .map_err(Failure::Usage)?;
    if !args.reference.exists() {
        return Err(Failure::Usage(format!("reference {} not found", args.reference.display())));
    }
    let pool = args.flags.pool()?;
    let per_input: Vec<(PathBuf, Result<Vec<Result<MetricsRow, String>>, String>)> = pool.install(|| {
        args.inputs
            .par_iter()
            .map(|input| (input.clone(), score_input(input, &args.reference, &methods, &cfg)))
            .collect()
    });

    let mut report = MetricsReport::new(args.reference.to_string_lossy());
    let mut manifest = RunManifest::new("compare", cfg);
    let mut failures = 0;
    for (input, result) in per_input {
        let mut errors = Vec::new();
        match result {
            Ok(rows) => {
                for row in rows {
                    match row {
                        Ok(r) => report.rows.push(r),
                        Err(e) => errors.push(e),
                    }
                }
            }
            Err(e) => errors.push(e),
        }
        for e in &errors {
            log::error!("{}: {e}", input.display());
        }
        failures += usize::from(!errors.is_empty());
        manifest.inputs.push(InputRecord {
            path: input,
            ok: errors.is_empty(),
            error: (!errors.is_empty()).then(|| errors.join("; ")),
            k_cutoff: None,
            warnings: vec![],
        });
    }
    if let Some(dir) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let file = File::create(&args.output).map_err(|e| Failure::Usage(format!("{}: {e}", args.output.display())))?;
    report.write_csv(BufWriter::new(file)).map_err(|e| Failure::Usage(e.to_string()))?;
    manifest.outputs.push(args.output.clone());
    manifest.extra = serde_json::json!({
        "reference": args.reference,
        "methods": methods.iter().map(Method::label).collect::<Vec<_>>(),
    });
    finish(manifest, &args.output.with_extension("manifest.json"), failures)
}

fn score_input(
    input: &Path,
    reference: &Path,
    methods: &[Method],
    cfg: &PipelineConfig,
) -> Result<Vec<Result<MetricsRow, String>>, String> {
    let reference = if reference.is_dir() { sibling(reference, input)? } else { reference.to_path_buf() };
    let ref_img = load_image(&reference).map_err(|e| e.to_string())?;
    let img = load_image(input).map_err(|e| e.to_string())?;
    let id = stem(input);
    Ok(methods
        .iter()
        .map(|m| {
            let candidate = m.run(input, &img, cfg)?;
            MetricsRow::score(&id, m.label(), &ref_img, &candidate, &cfg.ssim_constants).map_err(|e| e.to_string())
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct CorpusSpec {
    count: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_side")]
    width: usize,
    #[serde(default = "default_side")]
    height: usize,
}

fn default_side() -> usize {
    512
}

/// Accepted recipe documents: a list of scenes, `{"scenes": [...]}`, or
/// `{"corpus": {"count": N, "seed": S, "width": W, "height": H}}`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RecipeFile {
    List(Vec<SceneRecipe>),
    Scenes { scenes: Vec<SceneRecipe> },
    Corpus { corpus: CorpusSpec },
}

pub struct SimulateArgs {
    pub recipe: PathBuf,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

pub fn simulate(args: &SimulateArgs) -> Outcome {
    let text = std::fs::read_to_string(&args.recipe)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.recipe.display())))?;
    let doc: RecipeFile =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", args.recipe.display())))?;
    let mut scenes = match doc {
        RecipeFile::List(s) | RecipeFile::Scenes { scenes: s } => s,
        RecipeFile::Corpus { corpus: c } => corpus(c.count, args.seed.unwrap_or(c.seed), c.width, c.height),
    };
    if let Some(seed) = args.seed {
        for (i, s) in scenes.iter_mut().enumerate() {
            s.fog.seed = seed.wrapping_add(i as u64);
        }
    }
    let base = args.recipe.parent().unwrap_or(Path::new("")).to_path_buf();
    create_dir(&args.output)?;
    let flags = PipelineFlags { jobs: args.jobs, ..Default::default() };
    let pool = flags.pool()?;
    let results: Vec<Result<Vec<PathBuf>, String>> =
        pool.install(|| scenes.par_iter().map(|s| simulate_one(s, &base, &args.output)).collect());

    let mut manifest = RunManifest::new("simulate", PipelineConfig::default());
    manifest.seed = args.seed.unwrap_or(0);
    let mut failures = 0;
    for (scene, result) in scenes.iter().zip(results) {
        let (ok, error) = match result {
            Ok(paths) => {
                manifest.outputs.extend(paths);
                (true, None)
            }
            Err(e) => {
                log::error!("{}: {e}", scene.name);
                failures += 1;
                (false, Some(e))
            }
        };
        manifest.inputs.push(InputRecord {
            path: PathBuf::from(&scene.name),
            ok,
            error,
            k_cutoff: None,
            warnings: vec![],
        });
    }
    let resolved = args.output.join("recipes.json");
    let text = serde_json::to_string_pretty(&scenes).map_err(|e| Failure::Usage(e.to_string()))?;
    std::fs::write(&resolved, text).map_err(|e| Failure::Usage(format!("{}: {e}", resolved.display())))?;
    manifest.outputs.push(resolved);
    manifest.extra = serde_json::json!({ "recipe": args.recipe });
    finish(manifest, &args.output.join("manifest.json"), failures)
}

fn simulate_one(scene: &SceneRecipe, base: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, String> {
    let clear = match &scene.clear {
        ClearSource::File { path } => load_image(base.join(path)).map_err(|e| e.to_string())?,
        ClearSource::Synthetic(s) => s.render().map_err(|e| e.to_string())?.0,
    };
    let foggy = synthesize_fog(&clear, &scene.fog).map_err(|e| e.to_string())?;
    let clear_path = out_dir.join(format!("{}_clear.png", scene.name));
    let foggy_path = out_dir.join(format!("{}_foggy.png", scene.name));
    save(&clear, &clear_path)?;
    save(&foggy, &foggy_path)?;
    Ok(vec![clear_path, foggy_path])
}
