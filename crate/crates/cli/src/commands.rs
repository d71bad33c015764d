use std::path::Path;

use phasesync::analysis::{check_theorem1, check_theorem2, AnalysisOptions, AnalysisVerdict};
use phasesync::io::{complex_from_json, fmt12, read_json, AgentsFile, ControllersFile, GraphSpec, MatrixJson, SystemSpec};
use phasesync::ltisys::{
    closed_loop, disagreement, simulate, simulation_horizon, verify_sync, Coupling, PhaseResponseOptions, SampleKind,
    StateSpace, TransferMatrix,
};
use phasesync::netgraph::{
    component_phase_bounds, connectivity, essential_phase_laplacian, frobenius_form, laplacian, WeightedDigraph,
};
use phasesync::phasecore::{self, PhaseOptions};
use phasesync::synthesis::{design_per_agent, design_uniform, DesignMode, DesignOptions, DesignResult, LmiOptions};
use phasesync::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::output::{in_dir, prepare, signal_header, signal_rows, write_csv, write_json, write_plot_script};
use crate::{
    AnalyzeArgs, Command, CouplingMode, DesignArgs, DesignModeArg, LapPhaseArgs, PhasesArgs, SimulateArgs, SweepArgs,
    SystemArgs,
};

pub fn run(cmd: &Command) -> Result<u8> {
    match cmd {
        Command::Phases(a) => phases(a),
        Command::LapPhase(a) => lap_phase(a),
        Command::Analyze(a) => analyze(a),
        Command::Design(a) => design(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn list(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt12(*x)).collect::<Vec<_>>().join(", ")
}

fn phases(a: &PhasesArgs) -> Result<u8> {
    let rows: MatrixJson = read_json(&a.matrix)?;
    let m = complex_from_json(&rows)?;
    let p = phasecore::phases(&m, &PhaseOptions { tol: a.tol, ..PhaseOptions::default() })?;
    println!("{}, phases [{}]", p.kind.kind.label(), list(&p.phases));
    println!("center {}", fmt12(p.center));
    println!("margin {}", fmt12(p.kind.margin));
    if let Some(out) = &a.out {
        write_json(out, &p)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct ComponentReport {
    nodes: Vec<usize>,
    theta: f64,
}

#[derive(Serialize)]
struct LapReport {
    has_spanning_tree: bool,
    strongly_connected: bool,
    weight_balanced: bool,
    /// Exact largest essential phase when the graph is strongly connected.
    essential_phase: Option<f64>,
    components: Vec<ComponentReport>,
}

fn lap_phase(a: &LapPhaseArgs) -> Result<u8> {
    let g = load_graph(&a.network)?;
    let conn = connectivity(&g);
    let dec = frobenius_form(&g)?;
    let thetas = component_phase_bounds(&dec, a.refine)?;
    let essential_phase =
        if conn.strongly_connected { Some(essential_phase_laplacian(&laplacian(&g))?.value) } else { None };
    let components: Vec<ComponentReport> = dec
        .blocks
        .iter()
        .zip(&thetas)
        .map(|(b, &theta)| ComponentReport { nodes: b.nodes.iter().map(|i| i + 1).collect(), theta })
        .collect();
    if let Some(v) = essential_phase {
        println!("essential phase {}", fmt12(v));
    }
    for (k, c) in components.iter().enumerate() {
        println!("component {}: nodes {:?} theta {}", k + 1, c.nodes, fmt12(c.theta));
    }
    if let Some(out) = &a.out {
        let report = LapReport {
            has_spanning_tree: conn.has_spanning_tree,
            strongly_connected: conn.strongly_connected,
            weight_balanced: conn.weight_balanced,
            essential_phase,
            components,
        };
        write_json(out, &report)?;
    }
    Ok(0)
}

fn load_graph(path: &Path) -> Result<WeightedDigraph> {
    read_json::<GraphSpec>(path)?.build()
}

fn load_system(s: &SystemArgs) -> Result<(WeightedDigraph, Vec<TransferMatrix>)> {
    let g = load_graph(&s.network)?;
    let agents = read_json::<AgentsFile>(&s.agents)?.agents()?;
    if agents.len() != g.n {
        return Err(Error::Input(format!("{} agents for a {}-node network", agents.len(), g.n)));
    }
    Ok((g, agents))
}

fn undirected_edge_count(g: &WeightedDigraph) -> usize {
    g.undirected_pairs().map_or(0, |p| p.len())
}

fn uniform_of(cf: &ControllersFile) -> Result<StateSpace> {
    cf.uniform
        .as_ref()
        .ok_or_else(|| Error::Input("controllers file has no uniform controller".into()))?
        .to_stable()
        .map_err(|e| Error::Input(format!("uniform controller: {e}")))
}

fn edge_systems(cf: &ControllersFile, g: &WeightedDigraph) -> Result<Vec<StateSpace>> {
    if cf.edges.is_empty() {
        Ok(vec![uniform_of(cf)?; undirected_edge_count(g)])
    } else {
        ControllersFile::stable_list(&cf.edges, "edge")
    }
}

fn agent_controllers(cf: &ControllersFile, n: usize) -> Result<Vec<StateSpace>> {
    if cf.controllers.is_empty() {
        return Err(Error::Input("controllers file has no per-agent controllers".into()));
    }
    let list = ControllersFile::stable_list(&cf.controllers, "controller")?;
    if list.len() != n {
        return Err(Error::Input(format!("{} controllers for {n} agents", list.len())));
    }
    Ok(list)
}

fn analyze(a: &AnalyzeArgs) -> Result<u8> {
    let (g, agents) = load_system(&a.system)?;
    let cf: ControllersFile = read_json(&a.controllers)?;
    let opts = AnalysisOptions {
        response: PhaseResponseOptions { points: a.grid, ..PhaseResponseOptions::default() },
        min_margin: a.tol,
        refine: a.refine,
    };
    let verdict = match a.mode {
        CouplingMode::Edges => check_theorem1(&agents, &edge_systems(&cf, &g)?, &g, &opts)?,
        CouplingMode::Controllers => check_theorem2(&agents, &agent_controllers(&cf, g.n)?, &g, &opts)?,
        CouplingMode::Uniform => check_theorem2(&agents, &vec![uniform_of(&cf)?; g.n], &g, &opts)?,
    };
    prepare(&a.out)?;
    write_json(&in_dir(&a.out, "verdict.json"), &verdict)?;
    write_margins(&in_dir(&a.out, "margins.csv"), &verdict)?;
    println!("{}", verdict.reason);
    if verdict.precondition_failed {
        return Ok(4);
    }
    println!("margin {} at omega {}", fmt12(verdict.margin), fmt12(verdict.worst_frequency));
    for c in &verdict.per_component {
        println!(
            "component {}: theta {} phase sums [{}, {}] margin {}",
            c.index + 1,
            fmt12(c.theta),
            fmt12(c.attained[0]),
            fmt12(c.attained[1]),
            fmt12(c.margin)
        );
    }
    Ok(if verdict.holds { 0 } else { 1 })
}

fn kind_label(k: SampleKind) -> &'static str {
    match k {
        SampleKind::Axis => "axis",
        SampleKind::Indentation => "indentation",
        SampleKind::InfinityArc => "infinity-arc",
    }
}

fn write_margins(path: &Path, v: &AnalysisVerdict) -> Result<()> {
    let header: Vec<String> =
        ["component", "omega", "re", "kind", "upper", "lower", "margin"].iter().map(|s| s.to_string()).collect();
    let rows = v.trace.iter().map(|p| {
        vec![
            (p.component + 1).to_string(),
            fmt12(p.omega),
            fmt12(p.re),
            kind_label(p.kind).to_string(),
            fmt12(p.upper),
            fmt12(p.lower),
            fmt12(p.margin),
        ]
    });
    write_csv(path, &header, rows)
}

fn design(a: &DesignArgs) -> Result<u8> {
    let (g, agents) = load_system(&a.system)?;
    let opts = DesignOptions {
        refine: a.refine,
        lmi: LmiOptions { seed: a.seed, feas_tol: a.tol, ..LmiOptions::default() },
        eps_min: a.eps,
    };
    let r = match a.mode {
        DesignModeArg::Uniform => design_uniform(&agents, &g, &opts)?,
        DesignModeArg::PerAgent => design_per_agent(&agents, &g, &opts)?,
    };
    prepare(&a.out)?;
    write_json(&in_dir(&a.out, "design.json"), &r)?;
    print_design(&r);
    if !r.feasible {
        return Ok(1);
    }
    let specs: Vec<SystemSpec> = r.controllers.iter().map(|t| SystemSpec::Terms { terms: vec![t.clone()] }).collect();
    let file = match r.mode {
        DesignMode::Uniform => ControllersFile { uniform: specs.into_iter().next(), ..ControllersFile::default() },
        DesignMode::PerAgent => ControllersFile { controllers: specs, ..ControllersFile::default() },
    };
    write_json(&in_dir(&a.out, "controllers.json"), &file)?;
    Ok(0)
}

fn print_design(r: &DesignResult) {
    println!("{}", r.reason);
    println!("component phase bounds [{}]", list(&r.thetas));
    for l in &r.lmi {
        println!("mode {}: LMI margin {}", fmt12(l.omega), fmt12(l.margin));
    }
    if r.feasible {
        println!("epsilon {} (first failing gain above: {})", fmt12(r.epsilon), fmt12(r.epsilon_star));
        if r.static_controller {
            println!("static controller");
        }
    }
}

fn coupling(cf: &ControllersFile, mode: Option<CouplingMode>, g: &WeightedDigraph, eps: f64) -> Result<Coupling> {
    let mode = match mode {
        Some(m) => m,
        None if !cf.edges.is_empty() => CouplingMode::Edges,
        None if !cf.controllers.is_empty() => CouplingMode::Controllers,
        None if cf.uniform.is_some() => CouplingMode::Uniform,
        None => return Err(Error::Input("controllers file is empty".into())),
    };
    let scale = |v: Vec<StateSpace>| v.iter().map(|s| s.scaled(eps)).collect::<Vec<_>>();
    Ok(match mode {
        CouplingMode::Edges => Coupling::Edges(scale(edge_systems(cf, g)?)),
        CouplingMode::Controllers => Coupling::Controllers(scale(agent_controllers(cf, g.n)?)),
        CouplingMode::Uniform => Coupling::Uniform(uniform_of(cf)?.scaled(eps)),
    })
}

fn simulate_cmd(a: &SimulateArgs) -> Result<u8> {
    let (g, agents) = load_system(&a.system)?;
    let cf: ControllersFile = read_json(&a.controllers)?;
    let cl = closed_loop(&agents, &coupling(&cf, a.mode, &g, a.eps)?, &g)?;
    let (n, m) = (g.n, agents[0].m());
    let report = verify_sync(&cl, &agents[0].modes, n, m)?;
    let (t_auto, dt_auto) = simulation_horizon(&report);
    let t_final = a.tfinal.unwrap_or(t_auto);
    let dt = a.dt.unwrap_or(if a.tfinal.is_some() { (t_final / 20000.0).max(1e-2) } else { dt_auto });
    let nx = cl.states();
    let x0 = match &a.x0 {
        Some(v) if v.len() == 1 => vec![v[0]; nx],
        Some(v) if v.len() == nx => v.clone(),
        Some(v) => {
            return Err(Error::Input(format!("--x0 has {} values, the closed loop has {nx} states", v.len())));
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            (0..nx).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
    };
    let traj = simulate(&cl, &x0, t_final, dt)?;
    let dis = disagreement(&traj, n, m)?;
    prepare(&a.out)?;
    write_csv(&in_dir(&a.out, "trajectory.csv"), &signal_header("y", n, m), signal_rows(&traj.t, &traj.y))?;
    write_csv(&in_dir(&a.out, "disagreement.csv"), &signal_header("e", n, m), signal_rows(&traj.t, &dis.y_dis))?;
    write_plot_script(&in_dir(&a.out, "plot.gp"), n * m + 1)?;
    println!("eigenstructure: {}", report.reason);
    println!("horizon {} step {} ({} samples)", fmt12(t_final), fmt12(dt), traj.t.len());
    println!("final outputs [{}]", list(traj.y.last().map_or(&[][..], |v| &v[..])));
    println!("tail disagreement {}", fmt12(dis.tail_sup));
    Ok(0)
}

fn sweep(a: &SweepArgs) -> Result<u8> {
    let (g, agents) = load_system(&a.system)?;
    let cf: ControllersFile = read_json(&a.controllers)?;
    let gains = match &a.eps {
        Some(v) => v.clone(),
        None => (0..=a.grid).map(|i| 0.5f64.powi(i as i32)).collect(),
    };
    if gains.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::Input("gains must be positive".into()));
    }
    let (n, m) = (g.n, agents[0].m());
    let mut rows = Vec::with_capacity(gains.len());
    for &eps in &gains {
        let cl = closed_loop(&agents, &coupling(&cf, a.mode, &g, eps)?, &g)?;
        let r = verify_sync(&cl, &agents[0].modes, n, m)?;
        println!("epsilon {}: {}", fmt12(eps), r.reason);
        rows.push(vec![
            fmt12(eps),
            (if r.pass { "1" } else { "0" }).to_string(),
            fmt12(r.slowest_stable),
            r.offending.len().to_string(),
        ]);
    }
    prepare(&a.out)?;
    let header: Vec<String> =
        ["epsilon", "pass", "slowest_stable", "offending"].iter().map(|s| s.to_string()).collect();
    write_csv(&in_dir(&a.out, "sweep.csv"), &header, rows)?;
    Ok(0)
}
