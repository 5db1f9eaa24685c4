use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use echo_lab::afc::{
    efficiency_lorentzian, multiplexing_metrics, optimal_square_params, optimize_storage_time,
    side_hole_splitting, MagnetConfig, SIDE_HOLE_SLOPE,
};
use echo_lab::analysis::{
    build_histogram, car_from_histogram, fit_coincidence_profile, g2_from_histogram, witness,
    CoincidenceHistogram,
};
use echo_lab::checks::{check_ids, run_checks};
use echo_lab::montecarlo::{
    read_etag, read_tags_csv, run_experiment, write_etag, write_tags_csv, TimeTag, CHANNEL_COUNT,
};
use echo_lab::Estimate;
use serde_json::{json, Value};

use crate::config::{sha256_hex, Loaded};
use crate::error::CliError;
use crate::output::{num, write_table, Format, Provenance, Table};
use crate::units::Time;

/// Settings shared by every subcommand.
pub struct Context {
    pub loaded: Loaded,
    pub seed: u64,
    pub duration: f64,
    pub out_dir: PathBuf,
    pub format: Format,
}

impl Context {
    fn provenance(&self, command: &str) -> Provenance {
        Provenance::new(command, &self.loaded.sha256, self.seed)
    }

    fn report(&self, path: &Path) {
        println!("wrote {}", path.display());
    }
}

fn estimate_cells(e: &Result<Estimate, echo_lab::Error>) -> (Value, Value, Value) {
    match e {
        Ok(e) => (num(e.value), num(e.sigma), Value::Null),
        Err(err) => (Value::Null, Value::Null, Value::String(err.to_string())),
    }
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let streams = run_experiment(&ctx.loaded.experiment, ctx.seed, ctx.duration)?;
    let tag_path = ctx.out_dir.join("tags.etag");
    let mut encoded = Vec::new();
    write_etag(&mut encoded, CHANNEL_COUNT, &streams.tags)
        .map_err(|e| CliError::io(&tag_path, e))?;
    std::fs::write(&tag_path, &encoded).map_err(|e| CliError::io(&tag_path, e))?;
    ctx.report(&tag_path);
    let prov = ctx.provenance("simulate");
    if ctx.format == Format::Csv {
        let path = ctx.out_dir.join("tags.csv");
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        std::io::Write::write_all(&mut out, prov.comment_lines().as_bytes())
            .map_err(|e| CliError::io(&path, e))?;
        write_tags_csv(&mut out, &streams.tags).map_err(|e| CliError::io(&path, e))?;
        ctx.report(&path);
    }

    let s = streams.summary;
    let mut table = Table::new(&["quantity", "value"]);
    table.push(vec![json!("duration_s"), num(ctx.duration)]);
    table.push(vec![json!("pairs"), json!(s.pairs)]);
    table.push(vec![json!("windows"), json!(s.windows)]);
    table.push(vec![json!("chunks"), json!(s.chunks)]);
    table.push(vec![json!("live_time_s"), num(s.live_time)]);
    for ch in 0..CHANNEL_COUNT as u8 {
        let n = streams.tags.iter().filter(|t| t.channel == ch).count();
        table.push(vec![json!(format!("tags_channel_{ch}")), json!(n)]);
    }
    table.push(vec![json!("tags_sha256"), json!(sha256_hex(&encoded))]);
    let extra = json!({
        "delay_check": ctx.loaded.delay_check,
        "memory": ctx.loaded.experiment.memory,
        "comb": ctx.loaded.comb,
        "side_holes": ctx.loaded.side_holes,
    });
    let path = write_table(
        &ctx.out_dir,
        "simulate",
        ctx.format,
        &prov,
        &table,
        Some(extra),
    )?;
    ctx.report(&path);
    Ok(())
}

fn read_tags(path: &Path) -> Result<Vec<TimeTag>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let reader = BufReader::new(file);
    let tags = if path.extension().is_some_and(|e| e == "csv") {
        read_tags_csv(reader)
    } else {
        read_etag(reader).map(|(_, tags)| tags)
    };
    let mut tags = tags.map_err(|e| CliError::io(path, e))?;
    tags.sort_by_key(|t| (t.time_ps, t.channel));
    Ok(tags)
}

pub fn analyze(ctx: &Context, input: Option<&Path>) -> Result<(), CliError> {
    let input = input
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.out_dir.join("tags.etag"));
    let tags = read_tags(&input)?;
    let a = &ctx.loaded.file.analysis;
    let exp = &ctx.loaded.experiment;
    let period = exp.source.pump.period;
    let center = a
        .center
        .map(Time::si)
        .or(exp.memory.map(|m| m.storage_time))
        .unwrap_or(0.0);

    let mut hist: CoincidenceHistogram = build_histogram(
        &tags,
        a.start_channel,
        a.stop_channel,
        a.bin_width.si(),
        (a.range_start.si(), a.range_end.si()),
    )?;
    if let Some(bg) = a.subtract_background {
        hist = hist.with_background_subtracted(bg);
    }
    let sides: Vec<f64> = if a.side_delays.is_empty() {
        vec![center - period, center + period]
    } else {
        a.side_delays.iter().map(|t| center + t.si()).collect()
    };
    let window = a.window.si();
    let g2 = g2_from_histogram(&hist, center, &sides, window);
    let car = car_from_histogram(&hist, center, window, period);
    let fit = fit_coincidence_profile(&hist, center, a.profile_span.si(), 10);

    let prov = ctx.provenance("analyze");
    let mut histogram = Table::new(&["tau_s", "counts"]);
    for (k, n) in hist.counts.iter().enumerate() {
        histogram.push(vec![num(hist.bin_center(k)), json!(n)]);
    }
    let path = write_table(
        &ctx.out_dir,
        "histogram",
        ctx.format,
        &prov,
        &histogram,
        None,
    )?;
    ctx.report(&path);

    let mut figures = Table::new(&["quantity", "value", "sigma", "note"]);
    let mut add = |name: &str, e: Result<Estimate, echo_lab::Error>| {
        let (v, s, note) = estimate_cells(&e);
        figures.push(vec![json!(name), v, s, note]);
    };
    add(
        "center_coincidences",
        Ok(Estimate::exact(hist.window_counts(center, window) as f64)),
    );
    add("g2", g2);
    add("car", car);
    match fit {
        Ok(f) => {
            add("idler_lifetime_s", Ok(f.idler_lifetime));
            add("signal_lifetime_s", Ok(f.signal_lifetime));
            add("profile_fwhm_s", Ok(f.fwhm));
        }
        Err(e) => add("profile_fwhm_s", Err(e)),
    }
    for ch in 0..CHANNEL_COUNT as u8 {
        let n = tags.iter().filter(|t| t.channel == ch).count();
        add(
            &format!("singles_channel_{ch}"),
            Ok(Estimate::new(n as f64, (n as f64).sqrt())),
        );
    }
    let extra =
        json!({ "input": input.display().to_string(), "center_s": center, "window_s": window });
    let path = write_table(
        &ctx.out_dir,
        "figures",
        ctx.format,
        &prov,
        &figures,
        Some(extra),
    )?;
    ctx.report(&path);
    Ok(())
}

pub fn memory_theory(
    ctx: &Context,
    depths: &[f64],
    finesses: &[f64],
    background: f64,
    storage_time: Option<Time>,
) -> Result<(), CliError> {
    let depths: Vec<f64> = if depths.is_empty() {
        (5..=30).map(|k| k as f64 / 10.0).collect()
    } else {
        depths.to_vec()
    };
    let finesses = if finesses.is_empty() {
        vec![2.0, 4.0, 8.0]
    } else {
        finesses.to_vec()
    };
    let t_m = storage_time
        .map(Time::si)
        .or(ctx.loaded.experiment.memory.map(|m| m.storage_time))
        .unwrap_or(1936e-9);
    let prov = ctx.provenance("memory-theory");

    let mut square = Table::new(&[
        "d",
        "d0",
        "gamma_tm_opt",
        "tooth_width_hz",
        "finesse_opt",
        "eta_opt",
    ]);
    let mut smooth = Table::new(&["d", "d0", "finesse", "eta"]);
    for &d in &depths {
        let opt = optimal_square_params(d, background, t_m)?;
        square.push(vec![
            num(d),
            num(background),
            num(opt.gamma_opt * t_m),
            num(opt.tooth_width_hz),
            num(opt.finesse),
            num(opt.eta_opt),
        ]);
        for &f in &finesses {
            smooth.push(vec![
                num(d),
                num(background),
                num(f),
                num(efficiency_lorentzian(d, f, background)?),
            ]);
        }
    }
    let extra = json!({ "storage_time_s": t_m });
    let path = write_table(
        &ctx.out_dir,
        "square_optimum",
        ctx.format,
        &prov,
        &square,
        Some(extra),
    )?;
    ctx.report(&path);
    let path = write_table(
        &ctx.out_dir,
        "finesse_efficiency",
        ctx.format,
        &prov,
        &smooth,
        None,
    )?;
    ctx.report(&path);
    for row in &square.rows {
        println!(
            "d = {}  eta_opt = {:.4}",
            row[0],
            row[5].as_f64().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

pub struct TmOptions {
    pub min: Time,
    pub max: Time,
    pub rep_period: Option<Time>,
    pub side_period: Option<Time>,
    pub photon_width: Option<Time>,
    pub limit: Option<usize>,
}

pub fn optimize_tm(ctx: &Context, opts: &TmOptions) -> Result<(), CliError> {
    let exp = &ctx.loaded.experiment;
    let rep = opts
        .rep_period
        .map(Time::si)
        .unwrap_or(exp.source.pump.period);
    let side = match opts.side_period {
        Some(t) => t.si(),
        None => {
            let holes = match ctx.loaded.side_holes {
                Some(h) => h,
                None => side_hole_splitting(&MagnetConfig::default(), SIDE_HOLE_SLOPE)?,
            };
            holes.storage_period.ok_or_else(|| {
                CliError::Usage(
                    "zero magnetic field gives no side-hole period; pass --side-period".to_string(),
                )
            })?
        }
    };
    let width = opts
        .photon_width
        .map(Time::si)
        .unwrap_or(exp.source.pump.pulse_width);
    let mut candidates = optimize_storage_time(rep, side, (opts.min.si(), opts.max.si()))?;
    if let Some(n) = opts.limit {
        candidates.truncate(n);
    }
    let mut table = Table::new(&[
        "storage_time_s",
        "half_integer_index",
        "side_multiple",
        "residual_s",
        "tbp",
        "mode_count",
    ]);
    for c in &candidates {
        let m = multiplexing_metrics(c.storage_time, width, rep)?;
        table.push(vec![
            num(c.storage_time),
            json!(c.half_integer_index),
            json!(c.side_multiple),
            num(c.residual),
            num(m.tbp),
            num(m.mode_count),
        ]);
    }
    let extra = json!({ "rep_period_s": rep, "side_period_s": side, "photon_width_s": width });
    let path = write_table(
        &ctx.out_dir,
        "storage_candidates",
        ctx.format,
        &ctx.provenance("optimize-tm"),
        &table,
        Some(extra),
    )?;
    ctx.report(&path);
    for c in candidates.iter().take(5) {
        println!(
            "t_M = {:.1} ns  ({}.5 x rep, residual {:.2} ns)",
            c.storage_time * 1e9,
            c.half_integer_index,
            c.residual * 1e9
        );
    }
    Ok(())
}

pub struct WitnessInput {
    pub visibility: f64,
    pub visibility_sigma: f64,
    pub g2: f64,
    pub g2_sigma: f64,
    pub port: u8,
    pub k_sigma: f64,
}

pub fn witness_cmd(ctx: &Context, w: &WitnessInput) -> Result<(), CliError> {
    let r = witness(
        Estimate::new(w.g2, w.g2_sigma),
        Estimate::new(w.visibility, w.visibility_sigma),
        w.port,
        w.k_sigma,
    )?;
    let mut table = Table::new(&[
        "port",
        "visibility",
        "visibility_sigma",
        "g2",
        "g2_sigma",
        "w",
        "w_sigma",
        "entangled",
        "k_sigma",
    ]);
    table.push(vec![
        json!(r.port),
        num(r.visibility.value),
        num(r.visibility.sigma),
        num(r.g2.value),
        num(r.g2.sigma),
        num(r.w.value),
        num(r.w.sigma),
        json!(r.entangled),
        num(r.k_sigma),
    ]);
    let path = write_table(
        &ctx.out_dir,
        "witness",
        ctx.format,
        &ctx.provenance("witness"),
        &table,
        None,
    )?;
    ctx.report(&path);
    println!(
        "W = {:.4} ± {:.4}{}",
        r.w.value,
        r.w.sigma,
        if r.entangled { " (entangled)" } else { "" }
    );
    Ok(())
}

pub fn paper_check(ctx: &Context, only: &[String]) -> Result<(), CliError> {
    let known = check_ids();
    for id in only {
        if !known.contains(&id.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown check `{id}` (known: {})",
                known.join(", ")
            )));
        }
    }
    let only: Vec<&str> = only.iter().map(String::as_str).collect();
    let results = run_checks(ctx.seed, &only);
    let mut table = Table::new(&["id", "title", "passed", "detail"]);
    for r in &results {
        println!("{r}");
        table.push(vec![
            json!(r.id),
            json!(r.title),
            json!(r.passed),
            json!(r.detail),
        ]);
    }
    let path = write_table(
        &ctx.out_dir,
        "paper_check",
        ctx.format,
        &ctx.provenance("paper-check"),
        &table,
        None,
    )?;
    ctx.report(&path);
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}
