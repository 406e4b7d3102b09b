use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srdc::diffcore::{central_difference, relative_error, Tensor, DEFAULT_STEP};
use srdc::model::{soft_assign, ModelParams, ModelSpec, Param};
use srdc::objectives::{self, LossBatch, SrdcLossGraph, TermWeights};

struct Instance {
    params: ModelParams,
    xt: Tensor,
    xs: Tensor,
    q_out: Tensor,
    q_feat: Tensor,
    src: Tensor,
    labels: Vec<usize>,
    weights: Vec<f64>,
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn random_stochastic(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    let mut data = Vec::new();
    for _ in 0..r {
        let row: Vec<f64> = (0..c).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = row.iter().sum();
        data.extend(row.into_iter().map(|v| v / s));
    }
    Tensor::matrix(r, c, data).unwrap()
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..5);
    let k = rng.random_range(2..5);
    let spec = ModelSpec {
        input_dim: d,
        hidden: vec![rng.random_range(3..7), rng.random_range(3..6)],
        feature_dim: rng.random_range(2..5),
        classes: k,
        feature_relu: seed % 4 == 3,
    };
    let mut params = ModelParams::init(&spec, seed).unwrap();
    // non-zero biases and centers so every parameter matters
    for p in params.params_mut() {
        let shape = p.value.shape().to_vec();
        let data: Vec<f64> = p.value.data().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
        p.value = Tensor::new(shape, data).unwrap();
    }
    let (nt, ns) = (rng.random_range(3..7), rng.random_range(3..7));
    let labels: Vec<usize> = (0..ns).map(|_| rng.random_range(0..k)).collect();
    let weights: Vec<f64> = (0..ns).map(|_| rng.random_range(0.0..1.0)).collect();
    Instance {
        xt: random_matrix(&mut rng, nt, d, 2.0),
        xs: random_matrix(&mut rng, ns, d, 2.0),
        q_out: random_stochastic(&mut rng, nt, k),
        q_feat: random_stochastic(&mut rng, nt, k),
        src: objectives::weighted_one_hot(&labels, &weights, k),
        labels,
        weights,
        params,
    }
}

fn flatten(params: &ModelParams) -> Vec<f64> {
    params.params().iter().flat_map(|p| p.value.data().to_vec()).collect()
}

fn unflatten(template: &ModelParams, flat: &[f64]) -> ModelParams {
    let mut at = 0;
    let params: Vec<Param> = template
        .params()
        .iter()
        .map(|p| {
            let n = p.value.len();
            let value = Tensor::new(p.value.shape().to_vec(), flat[at..at + n].to_vec()).unwrap();
            at += n;
            Param { value, ..p.clone() }
        })
        .collect();
    ModelParams::from_params(template.spec().clone(), params).unwrap()
}

fn loss(inst: &Instance, graph: &mut SrdcLossGraph, params: &ModelParams, w: TermWeights) -> f64 {
    let batch = LossBatch {
        x_target: &inst.xt,
        x_source: &inst.xs,
        q_out: &inst.q_out,
        q_feat: &inst.q_feat,
        source_targets: &inst.src,
        weights: w,
    };
    graph.evaluate(params, &batch).unwrap()["total"].item()
}

fn one_term(i: usize) -> TermWeights {
    let mut w = [0.0; 4];
    w[i] = 1.0;
    TermWeights {
        target_out: w[0],
        target_feat: w[1],
        source_out: w[2],
        source_feat: w[3],
    }
}

#[test]
fn every_loss_term_matches_finite_differences() {
    let start = std::time::Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let inst = instance(seed);
        let (nt, ns) = (inst.xt.rows(), inst.xs.rows());
        let mut graph = SrdcLossGraph::build(&inst.params, nt, ns).unwrap();
        let combos = (0..4).map(one_term).chain(std::iter::once(TermWeights {
            target_out: 1.0,
            target_feat: 1.0,
            source_out: 0.7,
            source_feat: 0.7,
        }));
        for w in combos {
            loss(&inst, &mut graph, &inst.params, w);
            let grads = graph.backward().unwrap();
            let analytic: Vec<f64> = inst
                .params
                .params()
                .iter()
                .flat_map(|p| grads[&p.name].data().to_vec())
                .collect();
            let mut probe = SrdcLossGraph::build(&inst.params, nt, ns).unwrap();
            let numeric = central_difference(
                |flat| Ok(loss(&inst, &mut probe, &unflatten(&inst.params, flat), w)),
                &flatten(&inst.params),
                DEFAULT_STEP,
            )
            .unwrap();
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "seed {seed}, weights {w:?}: relative error {err:e}");
            worst = worst.max(err);
        }
    }
    println!("max relative error {worst:e} in {:?}", start.elapsed());
}

#[test]
fn graph_losses_equal_plain_functions() {
    for seed in 0..20 {
        let inst = instance(seed);
        let mut graph = SrdcLossGraph::build(&inst.params, inst.xt.rows(), inst.xs.rows()).unwrap();
        let batch = LossBatch {
            x_target: &inst.xt,
            x_source: &inst.xs,
            q_out: &inst.q_out,
            q_feat: &inst.q_feat,
            source_targets: &inst.src,
            weights: one_term(0),
        };
        let out = graph.evaluate(&inst.params, &batch).unwrap();
        let p = &inst.params;
        let zt = p.embed(&inst.xt).unwrap();
        let zs = p.embed(&inst.xs).unwrap();
        let pt = p.classify(&zt).unwrap();
        let ps = p.classify(&zs).unwrap();
        let pt_soft = soft_assign(p.centers(), &zt).unwrap();
        let ps_soft = soft_assign(p.centers(), &zs).unwrap();
        let expected = [
            ("target_out", objectives::target_ce(&pt, &inst.q_out).unwrap()),
            ("target_feat", objectives::target_ce(&pt_soft, &inst.q_feat).unwrap()),
            (
                "source_out",
                objectives::source_ce_weighted(&ps, &inst.labels, &inst.weights).unwrap(),
            ),
            (
                "source_feat",
                objectives::source_ce_weighted(&ps_soft, &inst.labels, &inst.weights).unwrap(),
            ),
        ];
        for (name, v) in expected {
            assert!((out[name].item() - v).abs() < 1e-12, "{name}: {} vs {v}", out[name].item());
        }
    }
}

#[test]
fn soft_assignment_gradients_in_both_arguments() {
    use srdc::diffcore::Graph;
    use std::collections::HashMap;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let (n, k, d) = (4, 3, 3);
        let z = random_matrix(&mut rng, n, d, 1.5);
        let mu = random_matrix(&mut rng, k, d, 1.5);
        let coef = random_matrix(&mut rng, n, k, 1.0);
        let build = || {
            let mut g = Graph::new();
            let zi = g.input("z", &[n, d]).unwrap();
            let mi = g.input("mu", &[k, d]).unwrap();
            let ci = g.input("c", &[n, k]).unwrap();
            let dist = g.sq_dist(zi, mi).unwrap();
            let inv = g.add_scalar(dist, 1.0);
            let inv = g.recip(inv);
            let p = g.softmax(inv).unwrap();
            let m = g.mul(p, ci).unwrap();
            let s = g.sum(m);
            g.output("s", s);
            g
        };
        let eval = |g: &mut Graph, z: &Tensor, mu: &Tensor| {
            let feed: HashMap<&str, &Tensor> = [("z", z), ("mu", mu), ("c", &coef)].into_iter().collect();
            g.evaluate(&feed).unwrap()["s"].item()
        };
        let mut g = build();
        eval(&mut g, &z, &mu);
        let grads = g.backward_output("s").unwrap();
        let mut probe = build();
        let nz = central_difference(
            |v| Ok(eval(&mut probe, &Tensor::new(vec![n, d], v.to_vec()).unwrap(), &mu)),
            z.data(),
            DEFAULT_STEP,
        )
        .unwrap();
        let nm = central_difference(
            |v| Ok(eval(&mut probe, &z, &Tensor::new(vec![k, d], v.to_vec()).unwrap())),
            mu.data(),
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(relative_error(grads["z"].data(), &nz) < 1e-4);
        assert!(relative_error(grads["mu"].data(), &nm) < 1e-4);
    }
}
