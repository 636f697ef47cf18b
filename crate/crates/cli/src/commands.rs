use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use log::info;

use epr_revival::angular::{
    angle_kernel_coeffs, conditional_angle_sigma, joint_angle_pd_closed_form_grid,
    joint_angle_pd_quadrature, AngleSigmaMethod,
};
use epr_revival::coincidence::{coincidence_sectors, coincidence_strips, CoincidenceMap};
use epr_revival::epr::{find_revival, geometric_grid, position_scan, AngleModel, ScanResult};
use epr_revival::fit::{fit_angle_map, fit_position_map};
use epr_revival::frames::{generate_frames, read_stack, write_stack, FrameGeometry, FrameSettings};
use epr_revival::oam::{fit_oam_model, oam_uncertainty, OamForm};
use epr_revival::position::{
    conditional_momentum_sigma, conditional_position_sigma, joint_position_pd,
};
use epr_revival::sampling::GaussianPairSampler;
use epr_revival::turbulence::{
    conditional_angle_sigma_turbulent, oam_spectrum_turbulent, TurbulenceParams,
};
use epr_revival::{beam_widths, ExperimentParams};

use crate::config::Config;
use crate::manifest::Manifest;
use crate::{
    AnalyzeArgs, AngleDistMethod, AngleEstimator, Binning, Cli, Command, FramesCommand, GenArgs,
    ScanBasis, UsageError,
};

/// Fraction of the plane distance by which turbulent scans start beyond it.
const PLANE_CLEARANCE: f64 = 1.05;

struct Run<'a> {
    cli: &'a Cli,
    config: Config,
    manifest: Manifest,
    name: &'static str,
}

impl Run<'_> {
    fn csv(&mut self, file: &str) -> Result<(BufWriter<File>, PathBuf)> {
        let path = self.cli.out.join(file);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.manifest.artifact(path.clone());
        Ok((BufWriter::new(f), path))
    }

    fn finish(self) -> Result<()> {
        let path = self.manifest.write(&self.cli.out, self.name)?;
        info!("manifest written to {}", path.display());
        Ok(())
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Params => "params",
        Command::PositionDist { .. } => "position-dist",
        Command::AngleDist { .. } => "angle-dist",
        Command::UncertaintyScan { .. } => "uncertainty-scan",
        Command::EprScan => "epr-scan",
        Command::Revival { .. } => "revival",
        Command::TurbulenceScan => "turbulence-scan",
        Command::OamSpectrum { .. } => "oam-spectrum",
        Command::Frames(FramesCommand::Gen(_)) => "frames-gen",
        Command::Frames(FramesCommand::Analyze(_)) => "frames-analyze",
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    if !cli.out.is_dir() {
        std::fs::create_dir_all(&cli.out)
            .with_context(|| format!("creating {}", cli.out.display()))?;
    }
    let name = command_name(&cli.command);
    let manifest = Manifest::new(name, &config, cli.config.as_deref());
    let mut run = Run {
        cli,
        config,
        manifest,
        name,
    };
    let params = run.config.params()?;
    match &cli.command {
        Command::Params => params_cmd(&mut run, &params)?,
        Command::PositionDist { z_cm } => position_dist(&mut run, &params, metres(*z_cm)?)?,
        Command::AngleDist { z_cm, method } => {
            angle_dist(&mut run, &params, metres(*z_cm)?, *method)?
        }
        Command::UncertaintyScan { basis, estimator } => {
            uncertainty_scan(&mut run, &params, *basis, *estimator)?
        }
        Command::EprScan => epr_scan(&mut run, &params)?,
        Command::Revival { turbulent } => revival(&mut run, &params, *turbulent)?,
        Command::TurbulenceScan => turbulence_scan(&mut run, &params)?,
        Command::OamSpectrum { z_cm } => oam_spectrum(&mut run, &params, metres(*z_cm)?)?,
        Command::Frames(FramesCommand::Gen(args)) => frames_gen(&mut run, &params, args)?,
        Command::Frames(FramesCommand::Analyze(args)) => frames_analyze(&mut run, args)?,
    }
    run.finish()
}

fn metres(z_cm: f64) -> Result<f64> {
    if !(z_cm >= 0.0 && z_cm.is_finite()) {
        return Err(UsageError(format!("--z-cm must be finite and >= 0, got {z_cm}")).into());
    }
    Ok(z_cm * 1e-2)
}

fn params_cmd(run: &mut Run, p: &ExperimentParams) -> Result<()> {
    let rows = [
        ("w0", p.w0(), "m"),
        ("L", p.crystal_length(), "m"),
        ("lambda_p", p.lambda_p(), "m"),
        ("k", p.k(), "1/m"),
        ("sigma0", p.sigma0(), "m"),
        ("pump_range_k_w0^2", p.pump_range(), "m"),
        ("crossover_k_sigma0_w0", p.crossover_distance(), "m"),
        (
            "delta_p_theory",
            conditional_momentum_sigma(p).value,
            "hbar/m",
        ),
    ];
    let (w, path) = run.csv("params.csv")?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["name", "value", "unit"])?;
    for (name, value, unit) in rows {
        println!("{name:<24} {value:.6e} {unit}");
        w.write_record([name, &value.to_string(), unit])?;
    }
    w.flush()?;
    info!("wrote {}", path.display());
    Ok(())
}

fn position_dist(run: &mut Run, p: &ExperimentParams, z: f64) -> Result<()> {
    let dist = joint_position_pd(p, z, None)?;
    let (w, _) = run.csv("position_dist.csv")?;
    dist.write_csv(w)?;
    let sigma = conditional_position_sigma(p, z)?;
    run.manifest.set("z_m", z);
    println!("z = {z} m, conditional position uncertainty {sigma}");
    Ok(())
}

fn angle_dist(run: &mut Run, p: &ExperimentParams, z: f64, method: AngleDistMethod) -> Result<()> {
    let n_theta = run.config.usize("n_theta")?;
    let pd = match method {
        AngleDistMethod::Quadrature => {
            joint_angle_pd_quadrature(p, z, n_theta, run.config.usize("n_radial")?)?
        }
        AngleDistMethod::ClosedForm => {
            joint_angle_pd_closed_form_grid(&angle_kernel_coeffs(p, z)?, n_theta)?
        }
    };
    let (w, _) = run.csv("angle_dist.csv")?;
    pd.dist.write_csv(w)?;
    run.manifest.set("z_m", z);
    run.manifest.set("method", format!("{method:?}"));
    println!(
        "z = {z} m, conditional peak at delta_theta = {:.6} rad",
        pd.peak_separation()
    );
    Ok(())
}

fn uncertainty_scan(
    run: &mut Run,
    p: &ExperimentParams,
    basis: ScanBasis,
    estimator: AngleEstimator,
) -> Result<()> {
    let (lo, hi) = run.config.z_range()?;
    let zs = geometric_grid(lo, hi, run.config.usize("scan_points")?)?;
    let method = match estimator {
        AngleEstimator::Stddev => AngleSigmaMethod::StddevQuadrature,
        AngleEstimator::Fwhm => AngleSigmaMethod::FwhmClosedForm,
    };
    let (file, unit) = match basis {
        ScanBasis::Position => ("uncertainty_position.csv", "m"),
        ScanBasis::Angle => ("uncertainty_angle.csv", "rad"),
    };
    let (w, _) = run.csv(file)?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["z", "sigma", "unit", "saturated"])?;
    for &z in &zs {
        let est = match basis {
            ScanBasis::Position => conditional_position_sigma(p, z)?,
            ScanBasis::Angle => conditional_angle_sigma(p, z, method)?,
        };
        w.write_record([
            z.to_string(),
            est.value.to_string(),
            unit.to_string(),
            est.saturated.to_string(),
        ])?;
    }
    w.flush()?;
    run.manifest.set("basis", format!("{basis:?}"));
    run.manifest.set("estimator", format!("{estimator:?}"));
    println!("{} points over [{lo}, {hi}] m written to {file}", zs.len());
    Ok(())
}

fn print_crossings(scan: &ScanResult) {
    if scan.crossings.is_empty() {
        println!("{}: no crossing of the 0.5 hbar bound", scan.basis);
        return;
    }
    println!(
        "{:<18} {:<8} {:>12} {:>12} {:>12}",
        "basis", "kind", "z_m", "bracket_lo", "bracket_hi"
    );
    for c in &scan.crossings {
        println!(
            "{:<18} {:<8} {:>12.5} {:>12.5} {:>12.5}",
            scan.basis.to_string(),
            c.direction.to_string(),
            c.z,
            c.bracket.0,
            c.bracket.1
        );
    }
}

fn write_crossings(w: &mut csv::Writer<BufWriter<File>>, scan: &ScanResult) -> Result<()> {
    for c in &scan.crossings {
        w.write_record([
            scan.basis.to_string(),
            c.direction.to_string(),
            c.z.to_string(),
            c.bracket.0.to_string(),
            c.bracket.1.to_string(),
        ])?;
    }
    Ok(())
}

fn epr_scan(run: &mut Run, p: &ExperimentParams) -> Result<()> {
    let range = run.config.z_range()?;
    let n = run.config.usize("scan_points")?;
    let pos = position_scan(p, run.config.delta_p()?, range, n)?;
    let ang = find_revival(
        p,
        &AngleModel::default(),
        run.config.f64("delta_l")?,
        range,
        n,
    )?;
    let (w, _) = run.csv("epr_scan.csv")?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["z", "basis", "product", "entangled"])?;
    for scan in [&pos, &ang] {
        for &(z, prod) in &scan.points {
            w.write_record([
                z.to_string(),
                scan.basis.to_string(),
                prod.to_string(),
                (prod < 0.5).to_string(),
            ])?;
        }
    }
    w.flush()?;
    let (w, _) = run.csv("epr_crossings.csv")?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["basis", "direction", "z", "bracket_lo", "bracket_hi"])?;
    write_crossings(&mut w, &pos)?;
    write_crossings(&mut w, &ang)?;
    w.flush()?;
    print_crossings(&pos);
    print_crossings(&ang);
    Ok(())
}

fn turbulent_range(run: &mut Run, turb: &TurbulenceParams) -> Result<(f64, f64)> {
    let (lo, hi) = run.config.z_range()?;
    let lo = lo.max(turb.d() * PLANE_CLEARANCE);
    if !(hi > lo) {
        return Err(UsageError(format!(
            "z_max_cm must exceed {:.3} cm beyond the turbulence plane",
            lo * 100.0
        ))
        .into());
    }
    run.manifest.set("effective_z_min_m", lo);
    Ok((lo, hi))
}

fn revival(run: &mut Run, p: &ExperimentParams, turbulent: bool) -> Result<()> {
    let n = run.config.usize("scan_points")?;
    let (model, delta_l, range) = if turbulent {
        let turb = run.config.turbulence(p)?;
        let range = turbulent_range(run, &turb)?;
        let model = AngleModel::Turbulent {
            turb,
            settings: run.config.monte_carlo()?,
            half_window: run.config.f64("half_window_rad")?,
        };
        (model, run.config.f64("delta_l_turbulent")?, range)
    } else {
        (
            AngleModel::default(),
            run.config.f64("delta_l")?,
            run.config.z_range()?,
        )
    };
    let scan = find_revival(p, &model, delta_l, range, n)?;
    let (w, _) = run.csv("revival_scan.csv")?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["z", "product"])?;
    for &(z, prod) in &scan.points {
        w.write_record([z.to_string(), prod.to_string()])?;
    }
    w.flush()?;
    let (w, _) = run.csv("revival.csv")?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["basis", "direction", "z", "bracket_lo", "bracket_hi"])?;
    write_crossings(&mut w, &scan)?;
    w.flush()?;
    run.manifest.set("turbulent", turbulent);
    run.manifest.set("delta_l", delta_l);
    print_crossings(&scan);
    Ok(())
}

fn turbulence_scan(run: &mut Run, p: &ExperimentParams) -> Result<()> {
    let turb = run.config.turbulence(p)?;
    let (lo, hi) = turbulent_range(run, &turb)?;
    let zs = geometric_grid(lo, hi, run.config.usize("scan_points")?)?;
    let settings = run.config.monte_carlo()?;
    let window = run.config.f64("half_window_rad")?;
    let delta_l = run.config.f64("delta_l_turbulent")?;
    let (w, _) = run.csv("turbulence_scan.csv")?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["z", "delta_theta_sigma", "product"])?;
    for &z in &zs {
        let sigma = conditional_angle_sigma_turbulent(p, &turb, z, &settings, Some(window))?;
        w.write_record([
            z.to_string(),
            sigma.value.to_string(),
            (sigma.value * delta_l).to_string(),
        ])?;
        info!("z = {z:.4} m: {sigma}");
    }
    w.flush()?;
    run.manifest.set("sigma_r_m", turb.sigma_r());
    println!(
        "{} points over [{lo:.4}, {hi:.4}] m written to turbulence_scan.csv",
        zs.len()
    );
    Ok(())
}

fn oam_spectrum(run: &mut Run, p: &ExperimentParams, z: f64) -> Result<()> {
    let turb = run.config.turbulence(p)?;
    let l_max = run.config.usize("l_max")? as i32;
    let spectrum = oam_spectrum_turbulent(&turb, z, l_max)?;
    let (w, _) = run.csv("oam_spectrum.csv")?;
    spectrum.write_csv(w)?;
    let width = oam_uncertainty(&spectrum);
    let fit = fit_oam_model(&spectrum, OamForm::Exponential)?;
    run.manifest.set("z_m", z);
    run.manifest.set("sigma_r_m", turb.sigma_r());
    println!("z = {z} m, sigma_r = {:.4e} m", turb.sigma_r());
    println!("spectrum width {width}");
    println!(
        "a*exp(-b|l|) fit: a = {:.6}, b = {:.6}, relative residual {:.3e}",
        fit.model.a, fit.model.b, fit.diagnostics.relative_residual
    );
    Ok(())
}

fn frames_gen(run: &mut Run, p: &ExperimentParams, args: &GenArgs) -> Result<()> {
    let z = metres(args.z_cm)?;
    let geometry = FrameGeometry::centred(
        args.width,
        args.height,
        args.pixel_pitch_um * 1e-6,
        args.magnification,
    );
    let settings = FrameSettings {
        n_frames: args.frames,
        pair_rate: args.pair_rate,
        background_rate: args.background_rate,
        qe: args.qe,
        seed: args.seed.map_or_else(|| run.config.u64("seed"), Ok)?,
        z,
    };
    let stack = if args.turbulent {
        let turb = run.config.turbulence(p)?;
        generate_frames(&turb.pair_sampler(p, z)?, geometry, &settings)?
    } else {
        generate_frames(
            &GaussianPairSampler::new(&beam_widths(p, z)?),
            geometry,
            &settings,
        )?
    };
    write_stack(&stack, &args.output)?;
    run.manifest.artifact(args.output.clone());
    for (k, v) in [
        ("frames", settings.n_frames.to_string()),
        ("z_m", z.to_string()),
        ("width", args.width.to_string()),
        ("height", args.height.to_string()),
        ("pixel_pitch_m", geometry.pixel_pitch.to_string()),
        ("magnification", args.magnification.to_string()),
        ("pair_rate", args.pair_rate.to_string()),
        ("background_rate", args.background_rate.to_string()),
        ("qe", args.qe.to_string()),
        ("seed", settings.seed.to_string()),
        ("turbulent", args.turbulent.to_string()),
    ] {
        run.manifest.set(k, v);
    }
    let counts: u64 = stack.frames.iter().map(|f| f.total()).sum();
    println!(
        "wrote {} frames ({}x{}, {counts} counts) to {}",
        stack.frame_count(),
        args.width,
        args.height,
        args.output.display()
    );
    Ok(())
}

fn write_fit(run: &mut Run, names: &[&str], values: &[f64]) -> Result<()> {
    let (w, _) = run.csv("fit.csv")?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["parameter", "value"])?;
    for (n, v) in names.iter().zip(values) {
        w.write_record([n.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn frames_analyze(run: &mut Run, args: &AnalyzeArgs) -> Result<()> {
    let stack =
        read_stack(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let map: CoincidenceMap = match args.binning {
        Binning::Strips => coincidence_strips(&stack, args.strip_height)?,
        Binning::Sectors => coincidence_sectors(&stack, args.sectors, stack.geometry.origin, 0.0)?,
    };
    let (w, _) = run.csv("coincidence_map.csv")?;
    map.write_csv(w)?;
    run.manifest.set("input", args.input.display());
    run.manifest.set("binning", format!("{:?}", args.binning));
    run.manifest.set("frames", stack.frame_count());
    println!(
        "{} frames at z = {} m, {}x{} map over {} frame pairs",
        stack.frame_count(),
        stack.z,
        map.len(),
        map.len(),
        map.frame_pairs
    );
    if args.no_fit {
        return Ok(());
    }
    match args.binning {
        Binning::Strips => {
            let (fit, est) = fit_position_map(&map)?;
            let names = [
                "b",
                "a",
                "sigma1",
                "sigma2",
                "mu_sum",
                "mu_diff",
                "n",
                "m",
                "conditional_sigma",
            ];
            let values = [
                fit.b,
                fit.a,
                fit.sigma1,
                fit.sigma2,
                fit.mu_sum,
                fit.mu_diff,
                fit.n,
                fit.m,
                est.value,
            ];
            write_fit(run, &names, &values)?;
            println!(
                "position fit: sigma1 = {:.4e} m, sigma2 = {:.4e} m",
                fit.sigma1, fit.sigma2
            );
            println!("conditional position uncertainty {est}");
        }
        Binning::Sectors => {
            let (fit, est) = fit_angle_map(&map)?;
            write_fit(
                run,
                &["b", "a", "q", "c", "conditional_sigma"],
                &[fit.b, fit.a, fit.q, fit.c, est.value],
            )?;
            println!("angle fit: q = {:.6}, c = {:.6} rad", fit.q, fit.c);
            println!("conditional angle uncertainty {est}");
        }
    }
    Ok(())
}
