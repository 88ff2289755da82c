//! Subcommand implementations. Every output file is a pure function of the
//! inputs and the seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ergm_vi::gof::bgof;
use ergm_vi::inference::{corrected_covariance, credible_intervals, log_bayes_factor, BfMethod};
use ergm_vi::oracle::{exact_posterior_moments, QuadratureGrid};
use ergm_vi::sampler::simulate;
use ergm_vi::vi::fit;
use ergm_vi::{Heterogeneity, Model, Network};
use log::info;

use crate::config::{load_config, FittedModelFile, LoadedConfig, SCHEMA_VERSION};
use crate::data::{self, write_edge_list};
use crate::error::CliError;

pub struct Context {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl Context {
    fn config(&self) -> Result<LoadedConfig, CliError> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs --config".into()))?;
        load_config(path, self.seed)
    }

    fn out(&self, name: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Output(format!("{}: {e}", self.out_dir.display())))?;
        Ok(self.out_dir.join(name))
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn model_for(file: &FittedModelFile) -> Result<(Model, Network), CliError> {
    let n = file.node_names.len();
    let net = Network::from_edge_list(&file.edges, n, file.directed)?;
    let model = Model::new(file.spec.clone(), &file.covariates, n, file.directed)?;
    Ok((model, net))
}

pub fn cmd_fit(ctx: &Context) -> Result<(), CliError> {
    let lc = ctx.config()?;
    let cfg = &lc.config;
    let ds = data::load(&lc)?;
    let n = ds.network.n_nodes();
    let model = Model::new(cfg.model.clone(), &ds.covariates, n, cfg.data.directed)?;
    info!(
        "fitting {} parameters on {} nodes and {} ties",
        model.layout().dim(),
        n,
        ds.network.edge_count()
    );
    let mut result = fit(&model, &ds.network, &cfg.fit)?;
    info!(
        "stopped after {} iterations (converged: {})",
        result.iterations, result.converged
    );
    let cc = corrected_covariance(
        &result,
        &model,
        &ds.network,
        cfg.inference.b_sims,
        &cfg.fit.sampler,
    )?;
    result.corrected = Some(cc);

    let file = FittedModelFile {
        schema_version: SCHEMA_VERSION,
        config_hash: lc.hash.clone(),
        seed: cfg.seed,
        directed: cfg.data.directed,
        node_names: ds.node_names.clone(),
        edges: ds.network.edges(),
        spec: cfg.model.clone(),
        covariates: ds.covariates.clone(),
        inference: cfg.inference.clone(),
        fit: result,
    };
    write(&ctx.out("fit.json")?, &file.to_json()?)?;

    let mut trace = String::from("iteration,elbo_proxy\n");
    for (i, v) in file.fit.elbo_trace.iter().enumerate() {
        writeln!(trace, "{},{v}", i + 1).expect("string write");
    }
    write(&ctx.out("trace.csv")?, &trace)?;

    let (text, csv) = summary(&file, &model)?;
    write(&ctx.out("summary.txt")?, &text)?;
    write(&ctx.out("summary.csv")?, &csv)?;
    print!("{text}");
    Ok(())
}

/// Human-readable table of `β` and hyperparameters plus a CSV over all of `θ`.
fn summary(file: &FittedModelFile, model: &Model) -> Result<(String, String), CliError> {
    let fit = &file.fit;
    let cc = fit
        .corrected
        .as_ref()
        .ok_or_else(|| CliError::Data("fitted model has no corrected covariance".into()))?;
    let q = cc.dim;
    let level = file.inference.level;
    let ci = credible_intervals(cc, &fit.lambda_hat.mu[..q], level)?;
    let names = &fit.param_names;
    let pct = level * 100.0;

    let mut csv = String::from("parameter,mean,sd,lower,upper,excludes_zero\n");
    for k in 0..q {
        let (lo, hi) = ci[k];
        writeln!(
            csv,
            "{},{},{},{lo},{hi},{}",
            names[k],
            fit.lambda_hat.mu[k],
            cc.variance(k).sqrt(),
            lo > 0.0 || hi < 0.0
        )
        .expect("string write");
    }

    let mut t = String::new();
    writeln!(t, "config sha256 {}", file.config_hash).expect("string write");
    writeln!(
        t,
        "seed {}  iterations {}  converged {}",
        file.seed, fit.iterations, fit.converged
    )
    .expect("string write");
    writeln!(t).expect("string write");
    writeln!(
        t,
        "{:<24} {:>10} {:>10} {:>10}  {pct}% corrected interval",
        "term", "mean", "sd", ""
    )
    .expect("string write");
    for k in 0..model.layout().n_terms {
        let (lo, hi) = ci[k];
        let flag = if lo > 0.0 || hi < 0.0 { "*" } else { "" };
        writeln!(
            t,
            "{:<24} {:>10.4} {:>10.4} {:>10}  [{lo:.4}, {hi:.4}] {flag}",
            names[k],
            fit.lambda_hat.mu[k],
            cc.variance(k).sqrt(),
            ""
        )
        .expect("string write");
    }
    let p = &fit.point;
    writeln!(t).expect("string write");
    writeln!(t, "sigma2_beta   {:.4}", p.sigma2_beta).expect("string write");
    let extra = [
        ("mu_gamma", p.mu_gamma),
        ("sigma2_gamma", p.sigma2_gamma),
        ("sigma2_delta", p.sigma2_delta),
        ("sigma2_phi", p.sigma2_phi),
        ("rho", p.rho),
    ];
    for (name, v) in extra {
        if let Some(v) = v {
            writeln!(t, "{name:<13} {v:.4}").expect("string write");
        }
    }
    writeln!(t, "\n* interval excludes zero").expect("string write");
    Ok((t, csv))
}

pub fn cmd_simulate(
    ctx: &Context,
    fit_path: Option<&Path>,
    theta: Option<&str>,
    n: usize,
) -> Result<(), CliError> {
    let (model, start, names, (mut sampler, theta)) = match (fit_path, theta) {
        (Some(p), None) => {
            let file = FittedModelFile::load(p)?;
            let (model, net) = model_for(&file)?;
            let q = model.layout().theta_dim();
            let mut sampler = file.fit.config.sampler.clone();
            sampler.seed = ctx.seed.unwrap_or(file.seed);
            let theta = file.fit.lambda_hat.mu[..q].to_vec();
            (model, net, file.node_names, (sampler, theta))
        }
        (None, Some(t)) => {
            let lc = ctx.config()?;
            let ds = data::load(&lc)?;
            let n_nodes = ds.network.n_nodes();
            let model = Model::new(
                lc.config.model.clone(),
                &ds.covariates,
                n_nodes,
                lc.config.data.directed,
            )?;
            let theta = t
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::Config(format!("cannot parse --theta `{t}`")))?;
            let q = model.layout().theta_dim();
            if theta.len() != q {
                return Err(CliError::Config(format!(
                    "--theta has {} values, the model has {q} (terms then random effects)",
                    theta.len()
                )));
            }
            (
                model,
                ds.network,
                ds.node_names,
                (lc.config.fit.sampler.clone(), theta),
            )
        }
        _ => {
            return Err(CliError::Config(
                "simulate needs exactly one of --fit or --theta".into(),
            ))
        }
    };
    if n == 0 {
        return Ok(());
    }
    sampler.n_draws = n;
    let nets = simulate(&start, &theta, &model, &sampler)?;
    for (k, net) in nets.iter().enumerate() {
        write_edge_list(&ctx.out(&format!("sim_{k:04}.csv"))?, net, &names)?;
    }
    info!("wrote {n} networks to {}", ctx.out_dir.display());
    Ok(())
}

pub fn cmd_gof(ctx: &Context, fit_path: &Path, n_sim: Option<usize>) -> Result<(), CliError> {
    let file = FittedModelFile::load(fit_path)?;
    let (model, net) = model_for(&file)?;
    let n_sim = n_sim.unwrap_or(file.inference.gof_sims);
    let mut sampler = file.fit.config.sampler.clone();
    sampler.seed = ctx.seed.unwrap_or(file.seed);
    let report = bgof(&file.fit, &model, &net, n_sim, &sampler)?;
    let open = |name: &str| -> Result<fs::File, CliError> {
        let p = ctx.out(name)?;
        fs::File::create(&p).map_err(|e| CliError::Output(format!("{}: {e}", p.display())))
    };
    report.write_csv(open("gof.csv")?)?;
    report.write_summary_csv(open("gof_summary.csv")?)?;
    for f in &report.families {
        if let Some((inside, total)) = f.band_coverage(5) {
            println!(
                "{:<10} {inside}/{total} bins with mass >= 5 inside the simulated range",
                f.name
            );
        }
    }
    Ok(())
}

pub fn cmd_bf(ctx: &Context, fit_1: &Path, fit_2: &Path) -> Result<(), CliError> {
    let a = FittedModelFile::load(fit_1)?;
    let b = FittedModelFile::load(fit_2)?;
    if a.edges != b.edges || a.node_names != b.node_names || a.directed != b.directed {
        return Err(CliError::Data(
            "the two fits were estimated on different networks".into(),
        ));
    }
    let (m1, net) = model_for(&a)?;
    let (m2, _) = model_for(&b)?;
    let mut path = a.inference.path_config(&a.fit.config);
    path.sampler.seed = ctx.seed.unwrap_or(a.seed);
    let r = log_bayes_factor(&a.fit, &m1, &b.fit, &m2, &net, &path)?;
    let method = match r.method {
        BfMethod::Nested => "nested",
        BfMethod::Nonnested => "nonnested",
    };
    let mut text = String::new();
    writeln!(
        text,
        "log BF_12 = {:.6}  (positive favours {})",
        r.log_bf,
        fit_1.display()
    )
    .expect("string write");
    writeln!(
        text,
        "method {method}, grid {}, draws per node {}",
        r.grid, r.draws_per_node
    )
    .expect("string write");
    writeln!(
        text,
        "log kappa ratio {:.6} (s.e. {:.6})",
        r.log_kappa_ratio, r.log_kappa_std_error
    )
    .expect("string write");
    writeln!(text, "log likelihood difference {:.6}", r.log_lik_diff).expect("string write");
    writeln!(text, "log prior difference {:.6}", r.log_prior_diff).expect("string write");
    writeln!(text, "log q difference {:.6}", r.log_q_diff).expect("string write");
    let csv = format!(
        "log_bf,log_kappa_ratio,log_kappa_std_error,log_lik_diff,log_prior_diff,log_q_diff,method,grid,draws_per_node\n\
         {},{},{},{},{},{},{method},{},{}\n",
        r.log_bf,
        r.log_kappa_ratio,
        r.log_kappa_std_error,
        r.log_lik_diff,
        r.log_prior_diff,
        r.log_q_diff,
        r.grid,
        r.draws_per_node
    );
    write(&ctx.out("bf.txt")?, &text)?;
    write(&ctx.out("bf.csv")?, &csv)?;
    print!("{text}");
    Ok(())
}

pub fn cmd_oracle(ctx: &Context) -> Result<(), CliError> {
    let lc = ctx.config()?;
    let ds = data::load(&lc)?;
    let model = Model::new(
        lc.config.model.clone(),
        &ds.covariates,
        ds.network.n_nodes(),
        lc.config.data.directed,
    )?;
    if model.spec().heterogeneity != Heterogeneity::None {
        return Err(CliError::Config(
            "the oracle supports models without random effects only".into(),
        ));
    }
    let o = &lc.config.oracle;
    let grid = QuadratureGrid::symmetric(model.layout().n_terms, o.half_width, o.cells);
    let post = exact_posterior_moments(&ds.network, &model, &grid)?;
    let names = model.param_names();
    let p = model.layout().n_terms;
    let mut text = format!(
        "log evidence {}\nrefinement change {}\n",
        post.log_evidence, post.refinement_change
    );
    let mut csv = String::from("parameter,mean,sd\n");
    for (k, name) in names.iter().enumerate().take(p) {
        writeln!(
            text,
            "{:<24} mean {:.6} sd {:.6}",
            name,
            post.mean[k],
            post.sd(k)
        )
        .expect("string write");
        writeln!(csv, "{},{},{}", name, post.mean[k], post.sd(k)).expect("string write");
    }
    write(&ctx.out("oracle.txt")?, &text)?;
    write(&ctx.out("oracle.csv")?, &csv)?;
    print!("{text}");
    Ok(())
}
