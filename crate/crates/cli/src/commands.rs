use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::Serialize;
use serde_json::json;
use soiling::campaign_io::{
    build_fit_dataset, load_campaign, load_weather, parse_timestamp, Campaign, MirrorFilter, SiteConfig, TrainingSpan,
};
use soiling::daily_loss::{
    daily_loadings, daily_loss_analytic, group_days, loading_percentile_scenarios, simulate_daily_losses,
    simulate_daily_losses_semi_physical, summarize, DayWeather, LoadingSource, SimulationOptions,
};
use soiling::dust::PrototypeDistribution;
use soiling::estimation::{self, FitResult, FitSettings, InitialGuess, ModelContext};
use soiling::loss_model::{predict_trajectory, KernelContext, MeasurementGeometry, ModelVariant};
use soiling::optics::MieTable;
use soiling::{Error, Result};

use crate::manifest::RunManifest;
use crate::{CampaignArgs, FitArgs, MieTableArgs, ModelArg, PredictArgs, SimulateArgs, SimulationMode};

const CACHE_ENV: &str = "SOILING_CACHE_DIR";

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

struct Loaded {
    site: SiteConfig,
    campaigns: Vec<Campaign>,
    inputs: Vec<PathBuf>,
}

impl Loaded {
    fn input_refs(&self) -> Vec<&Path> {
        self.inputs.iter().map(PathBuf::as_path).collect()
    }
}

/// Loads the site file and campaigns. Reflectance files are optional only
/// when `reflectance_required` is false.
fn load(args: &CampaignArgs, reflectance_required: bool) -> Result<Loaded> {
    let site = SiteConfig::load(&args.site_config)?;
    let mut inputs = vec![args.site_config.clone()];
    if reflectance_required || !args.reflectance.is_empty() {
        if args.reflectance.len() != args.weather.len() {
            return Err(Error::Config(format!(
                "{} --weather files but {} --reflectance files; give one of each per campaign",
                args.weather.len(),
                args.reflectance.len()
            )));
        }
    }
    let mut campaigns = Vec::with_capacity(args.weather.len());
    for (i, w) in args.weather.iter().enumerate() {
        inputs.push(w.clone());
        let c = match args.reflectance.get(i) {
            Some(r) => {
                inputs.push(r.clone());
                load_campaign(w, r, &site)?
            }
            None => load_weather(w, &site)?,
        };
        campaigns.push(c);
    }
    Ok(Loaded {
        site,
        campaigns,
        inputs,
    })
}

fn common_dt(campaigns: &[&Campaign]) -> Result<f64> {
    let dt = campaigns
        .first()
        .map(|c| c.dt_s)
        .ok_or_else(|| Error::Config("no campaigns given".into()))?;
    if campaigns.iter().any(|c| c.dt_s != dt) {
        return Err(Error::Config("campaigns use different interval lengths".into()));
    }
    Ok(dt)
}

fn parse_until(specs: &[String], n: usize) -> Result<BTreeMap<usize, NaiveDateTime>> {
    let mut out = BTreeMap::new();
    for s in specs {
        let (idx, ts) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--train-until expects INDEX=TIMESTAMP, got '{s}'")))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("--train-until: bad campaign index '{idx}'")))?;
        if idx >= n {
            return Err(Error::Config(format!("--train-until: campaign {idx} does not exist")));
        }
        let t = parse_timestamp(ts).ok_or_else(|| Error::Config(format!("--train-until: bad timestamp '{ts}'")))?;
        out.insert(idx, t);
    }
    Ok(out)
}

fn variant_of(m: ModelArg) -> ModelVariant {
    match m {
        ModelArg::SemiPhysical => ModelVariant::SemiPhysical,
        ModelArg::ConstantMean => ModelVariant::ConstantMean,
    }
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let loaded = load(&args.campaigns, true)?;
    let n = loaded.campaigns.len();
    let train: Vec<usize> = if args.train_campaigns.is_empty() {
        (0..n).collect()
    } else {
        args.train_campaigns.clone()
    };
    if let Some(bad) = train.iter().find(|&&i| i >= n) {
        return Err(Error::Config(format!("--train-campaigns: campaign {bad} does not exist ({n} given)")));
    }
    let until = parse_until(&args.train_until, n)?;
    let filter = MirrorFilter::parse(&args.mirrors);
    let variant = variant_of(args.model);
    let config = json!({
        "model": variant,
        "site": loaded.site,
        "train_campaigns": train,
        "train_until": until.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<BTreeMap<_, _>>(),
        "mirrors": filter,
        "initial": args.initial,
    });
    let manifest = RunManifest::start("fit", config, &loaded.input_refs(), None)?;

    let proto = loaded.site.prototype()?;
    let selected: Vec<(&Campaign, TrainingSpan)> = train
        .iter()
        .map(|&i| (&loaded.campaigns[i], TrainingSpan { until: until.get(&i).copied() }))
        .collect();
    let data = build_fit_dataset(&selected, &loaded.site, &proto, &filter)?;
    log::info!("fitting {} differences from {} experiments", data.n_differences(), data.experiments.len());

    let initial = InitialGuess {
        primary: args.initial.or(match variant {
            ModelVariant::SemiPhysical => loaded.site.hrz0_guess,
            ModelVariant::ConstantMean => None,
        }),
        sigma_dep: None,
    };
    let settings = FitSettings::default();
    let result = match variant {
        ModelVariant::ConstantMean => estimation::fit(&data, &ModelContext::ConstantMean, Some(initial), &settings)?,
        ModelVariant::SemiPhysical => {
            let mie = loaded.site.mie_table(cache_dir().as_deref())?;
            let dt_s = common_dt(&selected.iter().map(|(c, _)| *c).collect::<Vec<_>>())?;
            let ctx = KernelContext {
                mie: &mie,
                proto: &proto,
                deposition: loaded.site.deposition_params(),
                dt_s,
            };
            estimation::fit(&data, &ModelContext::SemiPhysical(ctx), Some(initial), &settings)?
        }
    };
    write_text(&args.out, &result.to_json()?)?;
    manifest.finish(&args.out)?;
    if result.diagnostics.degenerate {
        eprintln!(
            "warning: degenerate fit (Hessian condition number {:e}); confidence intervals marked unbounded",
            result.diagnostics.hessian_condition
        );
    }
    Ok(())
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

struct PredictionSetup<'a> {
    fit: &'a FitResult,
    site: &'a SiteConfig,
    proto: &'a PrototypeDistribution,
    mie: Option<&'a MieTable>,
}

impl PredictionSetup<'_> {
    fn context(&self, dt_s: f64) -> Option<KernelContext<'_>> {
        self.mie.map(|mie| KernelContext {
            mie,
            proto: self.proto,
            deposition: self.site.deposition_params(),
            dt_s,
        })
    }
}

/// Writes model rows for every slot in `[k0, k_end]` and measurement rows for
/// every measurement of the mirror in that range.
#[allow(clippy::too_many_arguments)]
fn predict_mirror<W: Write>(
    out: &mut csv::Writer<W>,
    setup: &PredictionSetup<'_>,
    campaign: &Campaign,
    mirror_id: &str,
    tilt_deg: f64,
    start: Option<NaiveDateTime>,
) -> Result<()> {
    let params = setup.fit.model_params()?;
    let records = campaign.records_for(mirror_id);
    let mut geometry: MeasurementGeometry = setup.site.geometry();
    let (k0, area0, sigma0) = match start {
        Some(t) => {
            let k = campaign
                .slot_index(t)
                .ok_or_else(|| Error::Config(format!("--from-clean {t} is outside campaign {}", campaign.label)))?;
            (k, 0.0, 0.0)
        }
        None => {
            let Some(first) = records.first() else {
                return Ok(());
            };
            let k = campaign.slot_index(first.timestamp).expect("records lie on the grid");
            let g = soiling::loss_model::incidence_factor(geometry.incidence_end_deg, geometry.surface_kind)?;
            let area = (1.0 - first.mean_r / geometry.nominal_reflectance) * geometry.reference_area / g;
            if area < 0.0 {
                log::info!(
                    "{}/{mirror_id}: first reflectance {} exceeds ρ₀; starting from it as a clean mirror",
                    campaign.label,
                    first.mean_r
                );
                geometry.nominal_reflectance = first.mean_r;
                (k, 0.0, first.sigma_mean)
            } else {
                (k, area, first.sigma_mean)
            }
        }
    };
    let k_end = match records.last() {
        Some(r) => campaign.slot_index(r.timestamp).expect("records lie on the grid").max(k0),
        None => campaign.slots.len() - 1,
    };
    let samples_all = campaign.interval_samples(setup.proto, setup.site.tsp_upper_um, tilt_deg)?;
    let samples = &samples_all[k0..k_end];
    let timestamps: Vec<NaiveDateTime> = (k0..=k_end).map(|k| campaign.slot_time(k)).collect();
    let ctx = setup.context(campaign.dt_s);
    let traj = predict_trajectory(&params, &timestamps, samples, &geometry, area0, sigma0, ctx.as_ref())?;

    for p in &traj {
        out.write_record([
            campaign.label.clone(),
            mirror_id.to_string(),
            fmt(tilt_deg),
            p.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
            "model".into(),
            fmt(p.mean_reflectance),
            fmt(p.sigma),
            fmt(p.lo2sigma),
            fmt(p.hi2sigma),
            p.saturated.to_string(),
            String::new(),
            String::new(),
        ])?;
    }
    for r in records {
        let Some(k) = campaign.slot_index(r.timestamp) else { continue };
        if k < k0 || k > k_end {
            continue;
        }
        let p = &traj[k - k0];
        out.write_record([
            campaign.label.clone(),
            mirror_id.to_string(),
            fmt(tilt_deg),
            r.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
            "measurement".into(),
            fmt(p.mean_reflectance),
            fmt(p.sigma),
            fmt(p.lo2sigma),
            fmt(p.hi2sigma),
            p.saturated.to_string(),
            fmt(r.mean_r),
            fmt(r.sigma_mean),
        ])?;
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let fit = FitResult::from_json_file(&args.fit)?;
    let loaded = load(&args.campaigns, false)?;
    let mut inputs = vec![args.fit.as_path()];
    inputs.extend(loaded.input_refs());
    let filter = MirrorFilter::parse(&args.mirrors);
    let start = match &args.from_clean {
        Some(s) => Some(parse_timestamp(s).ok_or_else(|| Error::Config(format!("--from-clean: bad timestamp '{s}'")))?),
        None => None,
    };
    let config = json!({
        "site": loaded.site,
        "mirrors": filter,
        "from_clean": args.from_clean,
    });
    let manifest = RunManifest::start("predict", config, &inputs, None)?;

    let proto = loaded.site.prototype()?;
    let mie = match fit.variant {
        ModelVariant::SemiPhysical => Some(loaded.site.mie_table(cache_dir().as_deref())?),
        ModelVariant::ConstantMean => None,
    };
    let setup = PredictionSetup {
        fit: &fit,
        site: &loaded.site,
        proto: &proto,
        mie: mie.as_ref(),
    };
    let mut out = csv::Writer::from_writer(create(&args.out)?);
    out.write_record([
        "campaign",
        "mirror_id",
        "tilt_deg",
        "timestamp",
        "kind",
        "mean_r",
        "sigma",
        "lo2sigma",
        "hi2sigma",
        "saturated",
        "measured_r",
        "measured_sigma",
    ])?;
    for campaign in &loaded.campaigns {
        if campaign.mirrors.is_empty() {
            if start.is_none() {
                return Err(Error::Config("without reflectance data a --from-clean timestamp is required".into()));
            }
            predict_mirror(&mut out, &setup, campaign, "horizontal", 0.0, start)?;
            continue;
        }
        for m in campaign.mirrors.iter().filter(|m| filter.matches(m)) {
            predict_mirror(&mut out, &setup, campaign, &m.mirror_id, m.tilt_deg, start)?;
        }
    }
    out.flush().map_err(|e| Error::io(format!("writing {}", args.out.display()), e))?;
    manifest.finish(&args.out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ScenarioReport {
    scenario: String,
    percentile: Option<f64>,
    day: Option<String>,
    linear_loading: Option<f64>,
    quadratic_loading: Option<f64>,
    n: usize,
    mean_pp_day: f64,
    std_pp_day: f64,
    q05: f64,
    q50: f64,
    q95: f64,
    analytic_mean_pp_day: Option<f64>,
    analytic_std_pp_day: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    variant: ModelVariant,
    mode: String,
    samples: usize,
    seed: u64,
    parameter_uncertainty: bool,
    complete_days: usize,
    scenarios: Vec<ScenarioReport>,
}

pub fn simulate_daily(args: &SimulateArgs) -> Result<()> {
    if args.samples == 0 {
        return Err(Error::Config("--samples must be positive".into()));
    }
    if !(0.0..=90.0).contains(&args.tilt) {
        return Err(Error::Config(format!("--tilt {} outside [0, 90]", args.tilt)));
    }
    let fit = FitResult::from_json_file(&args.fit)?;
    let loaded = load(&args.campaigns, false)?;
    let mut inputs = vec![args.fit.as_path()];
    inputs.extend(loaded.input_refs());
    let mode = match args.mode {
        SimulationMode::Scenarios => "scenarios",
        SimulationMode::SampleDays => "sample-days",
    };
    let config = json!({
        "site": loaded.site,
        "mode": mode,
        "percentiles": args.percentiles,
        "samples": args.samples,
        "tilt_deg": args.tilt,
        "parameter_uncertainty": !args.no_parameter_uncertainty,
        "include_partial": args.include_partial,
    });
    let manifest = RunManifest::start("simulate-daily", config, &inputs, Some(args.seed))?;

    let proto = loaded.site.prototype()?;
    let mut days: Vec<DayWeather> = Vec::new();
    for c in &loaded.campaigns {
        let series = c.timed_samples(&proto, loaded.site.tsp_upper_um, args.tilt)?;
        days.extend(group_days(&series, c.dt_s));
    }
    let usable: Vec<DayWeather> = days
        .into_iter()
        .filter(|d| {
            if d.complete || args.include_partial {
                true
            } else {
                log::warn!("skipping partial day {} ({} intervals)", d.day, d.samples.len());
                false
            }
        })
        .collect();
    let loadings = daily_loadings(&usable, true);
    if loadings.is_empty() {
        return Err(Error::Validation("no complete days in the weather data".into()));
    }
    let opts = SimulationOptions {
        n_samples: args.samples,
        seed: args.seed,
        parameter_uncertainty: !args.no_parameter_uncertainty,
    };
    let geometry = loaded.site.geometry();
    let scenarios = match args.mode {
        SimulationMode::Scenarios => loading_percentile_scenarios(&loadings, &args.percentiles)?,
        SimulationMode::SampleDays => Vec::new(),
    };

    let samples = match fit.variant {
        ModelVariant::ConstantMean => {
            let source = match args.mode {
                SimulationMode::Scenarios => LoadingSource::Scenarios(&scenarios),
                SimulationMode::SampleDays => LoadingSource::SampleDays(&loadings),
            };
            simulate_daily_losses(&fit, source, &geometry, &opts)?
        }
        ModelVariant::SemiPhysical => {
            let mie = loaded.site.mie_table(cache_dir().as_deref())?;
            let dt_s = common_dt(&loaded.campaigns.iter().collect::<Vec<_>>())?;
            let ctx = KernelContext {
                mie: &mie,
                proto: &proto,
                deposition: loaded.site.deposition_params(),
                dt_s,
            };
            let labelled: Vec<(String, DayWeather)> = match args.mode {
                SimulationMode::Scenarios => scenarios
                    .iter()
                    .map(|s| {
                        let day = usable
                            .iter()
                            .find(|d| d.day == s.loading.day)
                            .cloned()
                            .expect("scenario days come from the usable days");
                        (s.label.clone(), day)
                    })
                    .collect(),
                SimulationMode::SampleDays => usable.iter().map(|d| (d.day.to_string(), d.clone())).collect(),
            };
            simulate_daily_losses_semi_physical(
                &fit,
                &labelled,
                args.mode == SimulationMode::SampleDays,
                &ctx,
                &geometry,
                &opts,
            )?
        }
    };

    let mut w = csv::Writer::from_writer(create(&args.out)?);
    w.write_record(["scenario", "sample", "loss_pp_day"])?;
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &samples {
        let i = counters.entry(s.scenario.as_str()).or_default();
        w.write_record([s.scenario.clone(), i.to_string(), fmt(s.loss_pp_day)])?;
        *i += 1;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", args.out.display()), e))?;

    let reports = summarize(&samples)
        .into_iter()
        .map(|s| {
            let scenario = scenarios.iter().find(|sc| sc.label == s.scenario);
            let analytic = match (scenario, fit.variant) {
                (Some(sc), ModelVariant::ConstantMean) => daily_loss_analytic(&fit, &sc.loading, &geometry).ok(),
                _ => None,
            };
            ScenarioReport {
                scenario: s.scenario.clone(),
                percentile: scenario.map(|sc| sc.percentile),
                day: scenario.map(|sc| sc.loading.day.to_string()),
                linear_loading: scenario.map(|sc| sc.loading.linear_sum),
                quadratic_loading: scenario.map(|sc| sc.loading.quadratic_sum),
                n: s.n,
                mean_pp_day: s.mean,
                std_pp_day: s.std,
                q05: s.q05,
                q50: s.q50,
                q95: s.q95,
                analytic_mean_pp_day: analytic.map(|a| -a.mean),
                analytic_std_pp_day: analytic.map(|a| a.std()),
            }
        })
        .collect();
    let summary = SimulationSummary {
        variant: fit.variant,
        mode: mode.into(),
        samples: args.samples,
        seed: args.seed,
        parameter_uncertainty: opts.parameter_uncertainty,
        complete_days: loadings.len(),
        scenarios: reports,
    };
    let summary_path = summary_path(&args.out);
    write_text(&summary_path, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    manifest.finish(&args.out)?;
    Ok(())
}

pub fn summary_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".summary.json");
    out.with_file_name(name)
}

pub fn mie_table(args: &MieTableArgs) -> Result<()> {
    let site = SiteConfig::load(&args.site_config)?;
    let cache = cache_dir();
    if cache.is_none() && args.out.is_none() {
        return Err(Error::Config(format!(
            "nowhere to store the table: set {CACHE_ENV} or pass --out"
        )));
    }
    let config = json!({ "site": site });
    let manifest = RunManifest::start("mie-table", config, &[args.site_config.as_path()], None)?;
    let table = site.mie_table(cache.as_deref())?;
    if let Some(out) = &args.out {
        table.save(out)?;
        manifest.finish(out)?;
    }
    Ok(())
}
