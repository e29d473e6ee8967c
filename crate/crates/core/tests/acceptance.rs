//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{oracle_fixture, oracle_round, small_net, uniform_tensor};
use mcepl::config::parse_config;
use mcepl::data::{assign_labels, partition, synth_generate};
use mcepl::experiment::run_experiment;
use mcepl::masking::{group_lasso_grad, group_lasso_value, retained_count, BitMask, BitMaskSet};
use mcepl::nn::{apply_mask, finite_diff_check, forward_dense, loss_and_grad_v, softmax_cross_entropy, ModelArch, ParamSet, Tensor};
use mcepl::protocol::{account_mask_bits, decode_mask, encode_mask, header_bits, MaskFrame, FRAME_HEADER_BYTES, SEGMENT_HEADER_BYTES};
use mcepl::topology::{erdos_renyi, Graph};
use mcepl::trainer::{dslth_verify, run, Algorithm, BoundInstance, DslthConfig, Evaluable, HyperConfig, RunData, Simulation};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = (bool, String);

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst_v: f64 = 0.0;
    let mut worst_lasso: f64 = 0.0;
    for seed in 0..20 {
        let net = small_net(seed);
        let (_, grads) = loss_and_grad_v(&net.arch, &net.w, &net.m, &net.batch, &net.labels).unwrap();
        let v = apply_mask(&net.w, &net.m).unwrap();
        for (li, point) in v.tensors().iter().enumerate() {
            let f = |t: &Tensor| {
                let mut p = v.clone();
                p.tensors_mut()[li] = t.clone();
                let (logits, _) = forward_dense(&net.arch, &p, &net.batch).unwrap();
                softmax_cross_entropy(&logits, &net.labels).unwrap().0
            };
            worst_v = worst_v.max(finite_diff_check(f, &grads.tensors()[li], point, 1e-5, None).unwrap());
        }

        let mut r = common::rng(seed ^ 0x1a55);
        let z = ParamSet::new(net.w.iter().map(|(l, t)| (l, uniform_tensor(&mut r, t.shape(), -1.0, 1.0))).collect()).unwrap();
        let lambda = r.gen_range(0.01..1.0);
        let grad = group_lasso_grad(&z, lambda).unwrap();
        for (li, point) in z.tensors().iter().enumerate() {
            let f = |t: &Tensor| {
                let mut p = z.clone();
                p.tensors_mut()[li] = t.clone();
                group_lasso_value(&p, lambda).unwrap()
            };
            worst_lasso = worst_lasso.max(finite_diff_check(f, &grad.tensors()[li], point, 1e-6, None).unwrap());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst_v < 1e-5 && worst_lasso < 1e-5 && secs < 60.0,
        format!("max rel err grad_v {worst_v:.2e}, group lasso {worst_lasso:.2e}, {secs:.1} s"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut masks_agree = true;
    let cases = [([0.4, 0.6], 0.7, 0.05, 2), ([0.25, 1.0], 2.0, 0.0, 0), ([0.1, 0.3], 0.05, 0.3, 3)];
    for seed in 0..10 {
        for (r, lr, lambda, min_nonzero) in cases {
            let fx = oracle_fixture(seed);
            let graph = Graph::from_edges(2, &[(0, 1)]).unwrap();
            let mut h = HyperConfig::new(Algorithm::Mcepl, r.to_vec());
            h.lr = lr;
            h.lambda = lambda;
            h.min_nonzero = min_nonzero;
            h.batch_size = 16;
            h.rounds = 1;
            h.seed = seed;
            let data = RunData {
                arch: &fx.arch,
                train: &fx.train,
                test: &fx.train,
                plan: &fx.plan,
            };
            let mut sim = Simulation::new(h, &graph, data).unwrap();
            let w = sim.shared_weights().tensors()[0].data().to_vec();
            let z0: Vec<Vec<f64>> = sim.states().iter().map(|s| s.mask.z.tensors()[0].data().to_vec()).collect();
            let x: Vec<Vec<f64>> = (0..fx.train.len()).map(|i| fx.train.features.sample(i).into_data()).collect();
            let expect = oracle_round(
                &w,
                [&z0[0], &z0[1]],
                &x,
                &fx.train.labels,
                [&fx.plan.train[0], &fx.plan.train[1]],
                r,
                lr,
                lambda,
                min_nonzero,
            );
            sim.step().unwrap();
            for (s, e) in sim.states().iter().zip(&expect) {
                for (a, b) in s.mask.z.tensors()[0].data().iter().zip(&e.z) {
                    worst = worst.max((a - b).abs());
                }
                masks_agree &= s.current.masks()[0].iter().collect::<Vec<_>>() == e.mask;
                masks_agree &= s.neighbor_masks[0].1.masks()[0].iter().collect::<Vec<_>>() == e.received;
            }
        }
    }
    (
        worst <= 1e-12 && masks_agree,
        format!("30 cases, max |z - oracle| {worst:.1e}, masks agree: {masks_agree}"),
    )
}

fn sparsity_exactness() -> Outcome {
    let agents = 20;
    let dims = [2, 7, 7];
    let (train, test) = synth_generate(4, dims, 40, 0.3, 3).unwrap();
    let arch = ModelArch::desk(dims, [3, 4], 8, 4).unwrap();
    let labels = assign_labels(agents, 4, 2, 3).unwrap();
    let plan = partition(&train, &test, &labels, 3).unwrap();
    let graph = erdos_renyi(agents, 0.3, 3, 100).unwrap();
    let mut r = common::rng(33);
    let retention: Vec<f64> = (0..agents).map(|_| *[0.1, 0.2, 0.3, 0.4].choose(&mut r).unwrap()).collect();
    let mut h = HyperConfig::new(Algorithm::Mcepl, retention.clone());
    h.lr = 0.1;
    h.batch_size = 16;
    h.rounds = 10;
    let data = RunData {
        arch: &arch,
        train: &train,
        test: &test,
        plan: &plan,
    };
    let mut sim = Simulation::new(h, &graph, data).unwrap();
    let (mut checked, mut violations, mut exact) = (0, 0, 0);
    for _ in 0..10 {
        sim.step().unwrap();
        for s in sim.states() {
            for ((_, m), &cleared) in s.current.iter().zip(&s.fil_cleared) {
                let k = retained_count(m.len(), retention[s.id]);
                checked += 1;
                if m.count_ones() > k || m.count_ones() + cleared != k {
                    violations += 1;
                }
                if cleared == 0 {
                    exact += 1;
                }
            }
        }
    }
    (
        violations == 0,
        format!("{checked} agent-layer masks over 10 rounds, {exact} without filter clearing, {violations} violations"),
    )
}

fn communication_ratio() -> Outcome {
    let agents = 6;
    let dims = [2, 7, 7];
    let (train, test) = synth_generate(4, dims, 20, 0.3, 4).unwrap();
    let arch = ModelArch::desk(dims, [3, 4], 8, 4).unwrap();
    let labels = assign_labels(agents, 4, 2, 4).unwrap();
    let plan = partition(&train, &test, &labels, 4).unwrap();
    let graph = erdos_renyi(agents, 0.5, 4, 100).unwrap();
    let data = RunData {
        arch: &arch,
        train: &train,
        test: &test,
        plan: &plan,
    };
    let payload = |algo: Algorithm| -> Vec<u64> {
        let mut h = HyperConfig::new(algo, vec![0.3; agents]);
        h.batch_size = 8;
        let mut sim = Simulation::new(h, &graph, data).unwrap();
        (1..=3u64)
            .map(|k| {
                sim.step().unwrap();
                sim.ledger().round_payload(k)
            })
            .collect()
    };
    let mask = payload(Algorithm::Mcepl);
    let real = payload(Algorithm::AvrWeipru);
    let ratio_ok = mask.iter().zip(&real).all(|(m, r)| *m > 0 && m * 32 == *r);

    let desk = ModelArch::desk([3, 16, 16], [16, 32], 128, 10).unwrap();
    let entries: u64 = desk.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>() as u64).sum();
    let header = header_bits(desk.param_shapes().len());
    let overhead = header as f64 / entries as f64;
    (
        ratio_ok && overhead < 0.01,
        format!(
            "payload per round mask {mask:?} vs real {real:?}; default desk header {header} bits / payload {entries} bits = {:.3}%",
            overhead * 100.0
        ),
    )
}

fn dslth_desk() -> Outcome {
    let start = Instant::now();
    let ratios = [0.3, 0.5];
    let mut weight = Vec::new();
    let mut masks = vec![Vec::new(); ratios.len()];
    for seed in 1..=3 {
        let dims = [3, 8, 8];
        let (train, test) = synth_generate(4, dims, 100, 0.3, seed).unwrap();
        let arch = ModelArch::desk(dims, [8, 16], 32, 4).unwrap();
        let plan = partition(&train, &test, &[vec![0, 1, 2, 3]], seed).unwrap();
        let cfg = DslthConfig {
            ratios: ratios.to_vec(),
            steps: 1000,
            eval_interval: 50,
            weight_lr: 0.01,
            mask_lr: 0.1,
            batch_size: 32,
            seed,
            ..Default::default()
        };
        let report = dslth_verify(&arch, &train, &test, &plan, &cfg).unwrap();
        weight.push(report.final_weight_accuracy());
        for (i, r) in ratios.iter().enumerate() {
            masks[i].push(report.final_mask_accuracy(*r).unwrap());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let w = median(weight);
    let m: Vec<f64> = masks.into_iter().map(median).collect();
    let pass = m.iter().all(|a| *a >= 0.9 * w) && secs < 900.0;
    (
        pass,
        format!("median weight arm {w:.3}, mask arm r=0.3 {:.3}, r=0.5 {:.3}, 1000 steps, {secs:.0} s", m[0], m[1]),
    )
}

fn collaboration_gain() -> Outcome {
    let agents = 8;
    let algos = [Algorithm::Mcepl, Algorithm::IndMask, Algorithm::AvrWeipru];
    let mut finals = vec![Vec::new(); algos.len()];
    let mut gains = Vec::new();
    for seed in 1..=3 {
        let dims = [3, 8, 8];
        let (train, test) = synth_generate(6, dims, 60, 0.3, seed).unwrap();
        let arch = ModelArch::desk(dims, [8, 16], 32, 6).unwrap();
        let labels = assign_labels(agents, 6, 2, seed).unwrap();
        let plan = partition(&train, &test, &labels, seed).unwrap();
        let graph = erdos_renyi(agents, 0.5, seed, 100).unwrap();
        let retention = vec![0.1, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4];
        let data = RunData {
            arch: &arch,
            train: &train,
            test: &test,
            plan: &plan,
        };
        let accs: Vec<f64> = algos
            .iter()
            .map(|&algo| {
                let mut h = HyperConfig::new(algo, retention.clone());
                h.lr = if algo.is_mask_based() { 0.1 } else { 0.01 };
                h.batch_size = 32;
                h.rounds = 300;
                h.eval_interval = 300;
                h.seed = seed;
                run(h, &graph, data).unwrap().final_mean_accuracy()
            })
            .collect();
        gains.push(accs[0] - accs[1]);
        for (f, a) in finals.iter_mut().zip(accs) {
            f.push(a);
        }
    }
    let gain = median(gains.clone());
    let [mcepl, ind, avr] = [0, 1, 2].map(|i| median(finals[i].clone()));
    (
        gain > 0.0 && mcepl >= avr,
        format!(
            "median final accuracy mcepl {mcepl:.3}, ind_mask {ind:.3}, avr_weipru {avr:.3}; per-seed gain over ind_mask {:?}, median {gain:+.3}",
            gains.iter().map(|g| format!("{g:+.3}")).collect::<Vec<_>>()
        ),
    )
}

fn determinism() -> Outcome {
    let base = tempfile::tempdir().unwrap();
    let first = base.path().join("first");
    let text = format!(
        "experiment = train\nclasses = 4\nsynth_dims = 2,7,7\nsynth_per_class = 20\nn = 5\np = 0.6\nlabels_per_agent = 2\n\
         algorithm = mcepl,ind_mask,dsgd,avr_weipru,par_weipru,ind_weipru\nlr_mask = 0.1\nlr_weight = 0.01\nbatch_size = 8\n\
         rounds = 6\neval_interval = 2\nconv_channels = 3,4\nhidden = 8\nseed = 11\nworkers = 1\nout_dir = {}\n",
        first.display()
    );
    let cfg = parse_config(&text).unwrap();
    let files = run_experiment(&cfg, true).unwrap().files;
    let manifest = std::fs::read_to_string(first.join("manifest.cfg")).unwrap();
    let csvs: Vec<_> = files
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| p.file_name().unwrap().to_owned())
        .collect();
    let mut identical = true;
    for workers in [1, 2, 4] {
        let mut again = parse_config(&manifest).unwrap();
        let dir = base.path().join(format!("workers{workers}"));
        again.out_dir = dir.clone();
        again.workers = workers;
        run_experiment(&again, true).unwrap();
        for name in &csvs {
            identical &= std::fs::read(first.join(name)).unwrap() == std::fs::read(dir.join(name)).unwrap();
        }
    }
    (
        identical && !csvs.is_empty(),
        format!("{} metrics CSVs rerun from the manifest with 1, 2 and 4 workers: byte-identical {identical}", csvs.len()),
    )
}

/// Per-sample max-norm distances computed one probe at a time.
fn brute_extremes(a: &dyn Evaluable, b: &dyn Evaluable, probe: &Tensor) -> (f64, f64) {
    let mut hi: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let dims = a.input_dims();
    for i in 0..probe.shape()[0] {
        let x = Tensor::new(vec![1, dims[0], dims[1], dims[2]], probe.sample(i).into_data()).unwrap();
        let (ya, yb) = (a.eval(&x).unwrap(), b.eval(&x).unwrap());
        let mut d: f64 = 0.0;
        for k in 0..a.output_len() {
            d = d.max((ya.data()[k] - yb.data()[k]).abs());
        }
        hi = hi.max(d);
        lo = lo.min(d);
    }
    (hi, lo)
}

fn bound_checker() -> Outcome {
    let mut upper_holds = 0;
    let mut lower_holds = 0;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let inst = BoundInstance::random(7, i, 200).unwrap();
        let rep = inst.check().unwrap();
        upper_holds += usize::from(rep.upper_holds);
        lower_holds += usize::from(rep.lower_holds);
        let (eps1, _) = brute_extremes(&inst.f1, &inst.g1, &inst.probe);
        let (eps2, _) = brute_extremes(&inst.f2, &inst.g2, &inst.probe);
        let (alpha_u, alpha_l) = brute_extremes(&inst.f1, &inst.f2, &inst.probe);
        let (sup_g, inf_g) = brute_extremes(&inst.g1, &inst.g2, &inst.probe);
        for (a, b) in [
            (rep.eps1, eps1),
            (rep.eps2, eps2),
            (rep.alpha_u, alpha_u),
            (rep.alpha_l, alpha_l),
            (rep.sup_g, sup_g),
            (rep.inf_g, inf_g),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    (
        upper_holds == 100 && worst <= 1e-12,
        format!("upper bound holds on {upper_holds}/100, lower bound on {lower_holds}/100, max deviation from brute force {worst:.1e}"),
    )
}

fn codec() -> Outcome {
    let mut r = common::rng(99);
    let mut lossless = 0;
    let mut corrupted = 0;
    let mut rejected = 0;
    for _ in 0..10_000 {
        let layers = r.gen_range(1..=4);
        let density = r.gen_range(0.0..=1.0);
        let mut entries = Vec::new();
        let mut layer = 0;
        for _ in 0..layers {
            layer += r.gen_range(0..3);
            let rank = r.gen_range(1..=4);
            let shape: Vec<usize> = (0..rank).map(|_| r.gen_range(1..=6)).collect();
            let n: usize = shape.iter().product();
            let bits: Vec<bool> = (0..n).map(|_| r.gen_bool(density)).collect();
            entries.push((layer, BitMask::from_bools(&shape, &bits).unwrap()));
            layer += 1;
        }
        let set = BitMaskSet::new(entries).unwrap();
        let expected: Vec<(usize, Vec<usize>)> = set.iter().map(|(l, m)| (l, m.shape().to_vec())).collect();
        let frame = encode_mask(&set, r.gen_range(0..1000), r.gen()).unwrap();
        let wire = MaskFrame::from_bytes(frame.as_bytes().to_vec()).unwrap();
        if decode_mask(&wire, &expected).ok().as_ref() == Some(&set) && wire.payload_bits() == account_mask_bits(&set) {
            lossless += 1;
        }

        let mut off = FRAME_HEADER_BYTES;
        let mut padded = Vec::new();
        for (_, m) in set.iter() {
            off += SEGMENT_HEADER_BYTES;
            let len = m.len().div_ceil(8);
            if m.len() % 8 != 0 {
                padded.push((off + len - 1, m.len() % 8));
            }
            off += len;
        }
        if let Some(&(byte, used)) = padded.choose(&mut r) {
            let mut bytes = frame.into_bytes();
            bytes[byte] |= 1 << r.gen_range(used..8);
            corrupted += 1;
            let bad = MaskFrame::from_bytes(bytes).unwrap();
            if decode_mask(&bad, &expected).is_err() {
                rejected += 1;
            }
        }
    }
    (
        lossless == 10_000 && rejected == corrupted && corrupted > 0,
        format!("{lossless}/10000 round-trips lossless, {rejected}/{corrupted} corrupted-padding frames rejected"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", gradient_correctness),
        ("oracle equivalence", oracle_equivalence),
        ("sparsity exactness", sparsity_exactness),
        ("communication ratio", communication_ratio),
        ("dslth desk verification", dslth_desk),
        ("collaboration gain", collaboration_gain),
        ("determinism", determinism),
        ("bound checker", bound_checker),
        ("codec", codec),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        failed += usize::from(!pass);
        println!("{} {}. {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
