use crate::config::{Loaded, RunConfig};
use crate::output::{num, write_atomic, write_json};
use cuspcode::boundary_geometry::{HalfSpacePoint, Vect};
use cuspcode::coding_builder::{contraction_distortion_report, tail_report, uni_search, BranchSystem, Built};
use cuspcode::error::{Error, Result};
use cuspcode::flow_sim::{correlation, CorrelationOptions, Suspension};
use cuspcode::group_model::growth_fit;
use cuspcode::registry::Registry;
use cuspcode::spectral_engine::{
    estimate_delta, l2_contraction_probe, measure_diagnostics, resonance_scan, spectral_report, CuspProbe,
    DeltaEstimate, Discretization, ScanGrid, SpectralReport,
};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// What a command sees: the validated configuration and where to write.
pub struct Context {
    pub loaded: Loaded,
    pub out: PathBuf,
}

impl Context {
    fn cfg(&self) -> &RunConfig {
        &self.loaded.config
    }

    fn build(&self) -> Result<Built> {
        let t = std::time::Instant::now();
        let built = self.loaded.builder.build()?;
        log::info!(
            "built '{}': {} families in {:.2} s",
            self.loaded.builder.name(),
            built.system.families.len(),
            t.elapsed().as_secs_f64()
        );
        Ok(built)
    }

    fn system(&self) -> Result<Arc<BranchSystem>> {
        Ok(Arc::new(self.build()?.system))
    }

    fn disc(&self, sys: Arc<BranchSystem>) -> Result<Discretization> {
        self.cfg().discretization.build(sys)
    }

    fn estimate(&self, disc: &Discretization) -> Result<DeltaEstimate> {
        let e = estimate_delta(disc, &self.cfg().spectral.delta)?;
        log::info!("delta estimate {:.12} after {} evaluations", e.delta, e.evaluations);
        Ok(e)
    }

    /// Exponent for the Perron data: the configured one, else the estimated critical exponent.
    fn exponent(&self, disc: &Discretization) -> Result<f64> {
        match self.cfg().spectral.exponent {
            Some(e) => Ok(e),
            None => Ok(self.estimate(disc)?.delta),
        }
    }

    fn report(&self, disc: &Discretization) -> Result<SpectralReport> {
        let a = self.exponent(disc)?;
        spectral_report(disc, a, a, &self.cfg().spectral.power)
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let p = write_json(&self.out, name, value)?;
        log::info!("wrote {}", p.display());
        Ok(())
    }

    fn csv(&self, name: &str, text: &str) -> Result<()> {
        let p = write_atomic(&self.out, name, text.as_bytes())?;
        log::info!("wrote {}", p.display());
        Ok(())
    }
}

pub trait Command {
    fn name(&self) -> &'static str;
    fn run(&self, ctx: &Context) -> Result<()>;
}

macro_rules! command {
    ($ty:ident, $name:literal, |$ctx:ident| $body:block) => {
        struct $ty;
        impl Command for $ty {
            fn name(&self) -> &'static str {
                $name
            }
            fn run(&self, $ctx: &Context) -> Result<()> $body
        }
    };
}

pub fn commands() -> Registry<dyn Command, ()> {
    let mut r: Registry<dyn Command, ()> = Registry::new("command");
    r.register("code-build", |_| Ok(Box::new(CodeBuild)))
        .register("delta-estimate", |_| Ok(Box::new(DeltaEstimateCmd)))
        .register("tail-report", |_| Ok(Box::new(TailReportCmd)))
        .register("uni-check", |_| Ok(Box::new(UniCheck)))
        .register("spectral-scan", |_| Ok(Box::new(SpectralScan)))
        .register("l2-probe", |_| Ok(Box::new(L2Probe)))
        .register("mix-estimate", |_| Ok(Box::new(MixEstimate)))
        .register("orbit-count", |_| Ok(Box::new(OrbitCountCmd)))
        .register("measure-diag", |_| Ok(Box::new(MeasureDiag)));
    r
}

command!(CodeBuild, "code-build", |ctx| {
    let built = ctx.build()?;
    let sys = &built.system;
    let contraction = contraction_distortion_report(sys, ctx.cfg().tail.floor)?;
    let charts: Vec<_> = built
        .coding
        .iter()
        .flat_map(|c| &c.charts)
        .map(|ch| {
            let cell_mass: f64 = ch.state.cells.iter().map(|c| c.mass).sum();
            json!({
                "chart": ch.chart,
                "generations": ch.state.generation,
                "cells": ch.state.cells.len(),
                "flowers_removed": ch.state.removed_flowers.len(),
                "base_mass": ch.base_mass,
                "cell_mass": cell_mass,
                "coverage": cell_mass / ch.base_mass,
                "residual_measure_series": ch.state.residual_measure_series,
                "residual_slope": ch.slope,
                "extrapolated_generation": ch.extrapolated_generation,
            })
        })
        .collect();
    ctx.json(
        "code_build.json",
        &json!({
            "builder": ctx.loaded.builder.name(),
            "dim": sys.dim,
            "charts": sys.domains.len(),
            "families": sys.families.len(),
            "truncated_mass": sys.truncated_mass,
            "contraction": contraction,
            "coding": charts,
            "induced": built.induced.as_ref().map(|i| json!({
                "families": i.system.families.len(),
                "unreturned": i.unreturned,
                "pruned_mass": i.pruned_mass,
            })),
        }),
    )?;
    ctx.json("branch_system.json", sys)
});

command!(DeltaEstimateCmd, "delta-estimate", |ctx| {
    let disc = ctx.disc(ctx.system()?)?;
    let est = ctx.estimate(&disc)?;
    let a = ctx.cfg().spectral.exponent.unwrap_or(est.delta);
    let rep = spectral_report(&disc, est.delta, a, &ctx.cfg().spectral.power)?;
    ctx.json(
        "delta.json",
        &json!({
            "delta_estimate": est.delta,
            "bracket": est.bracket,
            "lambda_at_root": est.lambda_at_root,
            "evaluations": est.evaluations,
            "nodes": disc.len(),
            "exponent": a,
            "leading_eigenvalue": rep.leading_eigenvalue,
            "subdominant_modulus": rep.subdominant.map(|z| z.norm()),
            "gap": rep.gap,
            "truncated_mass": rep.truncated_mass,
        }),
    )?;
    let mut s = String::from("node,right,left,invariant\n");
    for k in 0..rep.nodes.len() {
        let x: Vec<String> = rep.nodes[k].as_slice().iter().map(|v| num(*v)).collect();
        s.push_str(&format!("{},{},{},{}\n", x.join(" "), num(rep.right[k]), num(rep.left[k]), num(rep.invariant[k])));
    }
    ctx.csv("eigendata.csv", &s)
});

command!(TailReportCmd, "tail-report", |ctx| {
    let sys = ctx.system()?;
    let t = &ctx.cfg().tail;
    let delta = match t.delta {
        Some(d) => d,
        None => ctx.estimate(&ctx.disc(sys.clone())?)?.delta,
    };
    let r = tail_report(&sys, delta, t.epsilon, t.floor)?;
    ctx.json("tail_report.json", &r)?;
    let mut s = String::from("n,term,partial_sum\n");
    for (n, (a, b)) in r.terms.iter().zip(&r.partial_sums).enumerate() {
        s.push_str(&format!("{},{},{}\n", n + 1, num(*a), num(*b)));
    }
    ctx.csv("tail_partial_sums.csv", &s)
});

command!(UniCheck, "uni-check", |ctx| {
    let out = uni_search(&ctx.build()?.system, &ctx.cfg().uni)?;
    ctx.json("uni.json", &json!({ "certified": out.certificate().is_some(), "outcome": out }))
});

command!(SpectralScan, "spectral-scan", |ctx| {
    let disc = ctx.disc(ctx.system()?)?;
    let delta = ctx.exponent(&disc)?;
    let c = &ctx.cfg().scan;
    let grid = ScanGrid::stepped((c.sigma[0], c.sigma[1]), c.sigma_step, (c.b[0], c.b[1]), c.b_step)?;
    let field = resonance_scan(&disc, delta, &grid, c.threshold)?;
    ctx.json("scan.json", &field)?;
    ctx.csv("scan.csv", &field.to_csv())
});

command!(L2Probe, "l2-probe", |ctx| {
    let disc = ctx.disc(ctx.system()?)?;
    let rep = ctx.report(&disc)?;
    let p = &ctx.cfg().probe;
    p.observable.validate(disc.system.dim)?;
    let raw: Vec<f64> = rep.nodes.iter().map(|x| p.observable.eval(x)).collect();
    let mean: f64 = raw.iter().zip(&rep.invariant).map(|(v, w)| v * w).sum();
    let v: Vec<f64> = raw.iter().map(|x| x - mean).collect();
    let r = l2_contraction_probe(&disc, &rep, p.b, p.steps, &v, p.fit_from)?;
    ctx.json("probe.json", &r)?;
    let mut s = String::from("m,norm\n");
    for (m, q) in r.series.iter().enumerate() {
        s.push_str(&format!("{m},{}\n", num(*q)));
    }
    ctx.csv("probe.csv", &s)
});

command!(MixEstimate, "mix-estimate", |ctx| {
    let sys = ctx.system()?;
    let rep = ctx.report(&ctx.disc(sys.clone())?)?;
    let f = &ctx.cfg().flow;
    let susp = Suspension::new(sys, f.floor)?;
    let mut opts = CorrelationOptions::new(CorrelationOptions::grid(f.t_max, f.t_step)?, f.samples, f.seed);
    opts.batches = f.batches;
    opts.sampling = f.sampling.clone();
    let c = correlation(&susp, &rep, &f.phi, &f.psi, &opts)?;
    ctx.json("correlation.json", &json!({ "seed": f.seed, "series": c }))?;
    ctx.csv("correlation.csv", &c.to_csv())
});

command!(OrbitCountCmd, "orbit-count", |ctx| {
    let g = ctx.loaded.group.as_ref().ok_or_else(|| Error::Invalid("orbit-count needs system.group".into()))?;
    let o = HalfSpacePoint::origin(g.dim);
    let fit = growth_fit(g, &ctx.cfg().orbit.ladder, &o, &o)?;
    ctx.json("orbit.json", &fit)
});

command!(MeasureDiag, "measure-diag", |ctx| {
    let disc = ctx.disc(ctx.system()?)?;
    let rep = ctx.report(&disc)?;
    let mu = rep.conformal_measure()?;
    let d = &ctx.cfg().diagnostics;
    let cusps = d
        .cusps
        .iter()
        .map(|c| {
            if c.point.len() != disc.system.dim {
                return Err(Error::Dimension(disc.system.dim, c.point.len()));
            }
            Ok(CuspProbe { p: Vect::from_slice(&c.point), rank: c.rank })
        })
        .collect::<Result<Vec<_>>>()?;
    let diag = measure_diagnostics(&mu, disc.scheme.domain(), rep.exponent, &cusps, &d.options);
    for w in &diag.warnings {
        log::warn!("{w}");
    }
    ctx.json("measure_diag.json", &diag)
});

/// Output directory: flag, then environment, then config, then `out`.
pub fn resolve_out(flag: Option<&Path>, env: Option<PathBuf>, cfg: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf).or(env).or_else(|| cfg.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from("out"))
}
