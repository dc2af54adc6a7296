//! Loop oracles and the numeric checks shared by the integration tests and
//! the acceptance runner. Each check returns a one-line summary on success
//! and the first violation otherwise.

#![allow(dead_code)]

use std::time::{Duration, Instant};

use panoda_core::attention::{
    channel_attention, position_attention, region_construction, region_interaction, DualAttention,
};
use panoda_core::damods::{
    adversarial_losses, discriminator_forward, fcdam_entropy_loss, Discriminator, DiscriminatorConfig, Supervision,
};
use panoda_core::datapipe::{LabelMap, IGNORE, NUM_CLASSES};
use panoda_core::evalkit::{directional_report, iou_report, miou_gap, ConfusionMatrix};
use panoda_core::losses::{bce_with_logits, boundary_bce, boundary_targets, sigmoid_entropy, weighted_cross_entropy};
use panoda_core::tensor::gradcheck::check_gradients;
use panoda_core::tensor::{Array, ParamStore, Var};
use panoda_core::trainer::{poly_lr, Adam};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array {
    Array::from_fn(shape, |_| rng.gen_range(lo..hi))
}

pub fn normal(shape: &[usize], mean: f64, rng: &mut ChaCha8Rng) -> Array {
    Array::from_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(rng);
        mean + z
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{name}: got {got:.12}, want {want:.12} (tol {tol:e})"))
}

fn within(name: &str, elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("{name} took {elapsed:?}, limit {limit:?}"))
}

// ---- loop oracles ----

/// Weighted mean of `-w_y log softmax(x)_y` over non-ignore pixels.
pub fn cross_entropy_oracle(logits: &Array, labels: &[u8], weights: &[f64]) -> f64 {
    let (n, k, h, w) = logits.dims4();
    let (mut num, mut den) = (0.0, 0.0);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let label = labels[(b * h + y) * w + x];
                if label == IGNORE {
                    continue;
                }
                let z: f64 = (0..k).map(|c| logits.at(&[b, c, y, x]).exp()).sum();
                let p = logits.at(&[b, label as usize, y, x]).exp() / z;
                num += -weights[label as usize] * p.ln();
                den += weights[label as usize];
            }
        }
    }
    num / den
}

/// Mean of `-(t ln σ + (1-t) ln(1-σ))` over all scores.
pub fn bce_oracle(scores: &Array, target: f64) -> f64 {
    let d = scores.data();
    d.iter()
        .map(|&x| {
            let s = sigmoid(x);
            -(target * s.ln() + (1.0 - target) * (1.0 - s).ln())
        })
        .sum::<f64>()
        / d.len() as f64
}

/// `Σ -σ ln σ` per item, averaged over the first axis.
pub fn entropy_oracle(f: &Array) -> f64 {
    let n = f.shape()[0] as f64;
    f.data()
        .iter()
        .map(|&x| {
            let s = sigmoid(x);
            -s * s.ln()
        })
        .sum::<f64>()
        / n
}

/// Explicit pixel-affinity attention, returns `(weights n×hw×hw, out)`.
pub fn position_oracle(f: &Array, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let (n, c, h, w) = f.dims4();
    let hw = h * w;
    let at = |b: usize, ch: usize, p: usize| f.data()[(b * c + ch) * hw + p];
    let mut weights = vec![0.0; n * hw * hw];
    let mut out = f.data().to_vec();
    for b in 0..n {
        for i in 0..hw {
            let e: Vec<f64> = (0..hw).map(|j| (0..c).map(|ch| at(b, ch, i) * at(b, ch, j)).sum()).collect();
            let z: f64 = e.iter().map(|v| v.exp()).sum();
            for j in 0..hw {
                let a = e[j].exp() / z;
                weights[(b * hw + i) * hw + j] = a;
                for ch in 0..c {
                    out[(b * c + ch) * hw + i] += gamma * a * at(b, ch, j);
                }
            }
        }
    }
    (weights, out)
}

/// Explicit channel-affinity attention, returns `(weights n×c×c, out)`.
pub fn channel_oracle(f: &Array, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let (n, c, h, w) = f.dims4();
    let hw = h * w;
    let at = |b: usize, ch: usize, p: usize| f.data()[(b * c + ch) * hw + p];
    let mut weights = vec![0.0; n * c * c];
    let mut out = f.data().to_vec();
    for b in 0..n {
        for i in 0..c {
            let e: Vec<f64> = (0..c).map(|j| (0..hw).map(|p| at(b, i, p) * at(b, j, p)).sum()).collect();
            let z: f64 = e.iter().map(|v| v.exp()).sum();
            for j in 0..c {
                let a = e[j].exp() / z;
                weights[(b * c + i) * c + j] = a;
                for p in 0..hw {
                    out[(b * c + i) * hw + p] += gamma * a * at(b, j, p);
                }
            }
        }
    }
    (weights, out)
}

/// Per-class IoU from pixel index sets; `None` when both sets are empty.
pub fn iou_set_oracle(pred: &[u8], gt: &[u8]) -> (Vec<Option<f64>>, f64) {
    use std::collections::BTreeSet;
    let mut ious = Vec::new();
    for c in 0..NUM_CLASSES as u8 {
        let valid = |i: &usize| gt[*i] != IGNORE;
        let p: BTreeSet<usize> = (0..pred.len()).filter(valid).filter(|&i| pred[i] == c).collect();
        let g: BTreeSet<usize> = (0..gt.len()).filter(|&i| gt[i] == c).collect();
        let union = p.union(&g).count();
        ious.push((union > 0).then(|| p.intersection(&g).count() as f64 / union as f64));
    }
    let present: Vec<f64> = ious.iter().flatten().copied().collect();
    let miou = present.iter().sum::<f64>() / present.len() as f64;
    (ious, miou)
}

/// A random label map with roughly `ignore_rate` ignore pixels and at least
/// one valid pixel.
pub fn random_labels(len: usize, classes: u8, ignore_rate: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut v: Vec<u8> = (0..len)
        .map(|_| if rng.gen_bool(ignore_rate) { IGNORE } else { rng.gen_range(0..classes) })
        .collect();
    if v.iter().all(|&l| l == IGNORE) {
        v[0] = 0;
    }
    v
}

fn small_discriminator(channels: usize, h: usize, w: usize, zero_final: bool, seed: u64) -> Discriminator {
    Discriminator::new(DiscriminatorConfig {
        in_channels: channels,
        ndf: 4,
        strides: DiscriminatorConfig::strides_for(h, w),
        zero_final,
        seed,
    })
}

/// Fixed random projection to a scalar, so every output element matters.
pub fn probe(v: &Var, seed: u64) -> Var {
    let mut r = rng(seed);
    v.mul(&Var::constant(uniform(v.shape(), -1.0, 1.0, &mut r))).sum()
}

// ---- criteria ----

/// Library losses against the loop oracles on 50 random instances.
pub fn loss_oracles() -> Check {
    let start = Instant::now();
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let n = r.gen_range(1..=2);
        let (h, w) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let k = NUM_CLASSES;
        let logits = uniform(&[n, k, h, w], -3.0, 3.0, &mut r);
        let labels = random_labels(n * h * w, k as u8, 0.2, &mut r);
        let weights: Vec<f64> = (0..k).map(|_| r.gen_range(0.5..2.0)).collect();

        let ce = weighted_cross_entropy(&Var::constant(logits.clone()), &labels, &weights).map_err(|e| e.to_string())?;
        let want = cross_entropy_oracle(&logits, &labels, &weights);
        worst = worst.max((ce.item() - want).abs());
        close(&format!("trial {trial} cross-entropy"), ce.item(), want, 1e-8)?;

        let src = uniform(&[n, k, h, w], 0.0, 1.0, &mut r);
        let tgt = uniform(&[n, k, h, w], 0.0, 1.0, &mut r);
        let d = small_discriminator(k, h, w, false, trial);
        let sup = Supervision {
            labels: &labels,
            class_weights: &weights,
        };
        let l = adversarial_losses(
            &Var::constant(src.clone()),
            &Var::constant(tgt.clone()),
            Some((&Var::constant(logits.clone()), &sup)),
            &d,
        )
        .map_err(|e| e.to_string())?;
        let ds = discriminator_forward(&d, &Var::constant(src)).map_err(|e| e.to_string())?;
        let dt = discriminator_forward(&d, &Var::constant(tgt)).map_err(|e| e.to_string())?;
        let want_adv = bce_oracle(dt.value(), 0.0);
        let want_d = bce_oracle(ds.value(), 0.0) + bce_oracle(dt.value(), 1.0);
        let seg = l.seg.as_ref().map(Var::item).unwrap_or(f64::NAN);
        for (name, got, want) in [("seg", seg, want), ("adv", l.adv.item(), want_adv), ("d", l.d.item(), want_d)] {
            worst = worst.max((got - want).abs());
            close(&format!("trial {trial} adversarial {name}"), got, want, 1e-8)?;
        }

        let fs = uniform(&[n, 4, h, w], -6.0, 6.0, &mut r);
        let ft = uniform(&[n, 4, h, w], -6.0, 6.0, &mut r);
        let (ls, lt) = (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0));
        let got = fcdam_entropy_loss(&Var::constant(fs.clone()), &Var::constant(ft.clone()), ls, lt).item();
        let want = ls * entropy_oracle(&fs) + lt * entropy_oracle(&ft);
        worst = worst.max((got - want).abs());
        close(&format!("trial {trial} entropy"), got, want, 1e-8)?;
    }
    within("loss oracles", start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("50 instances, max abs deviation {worst:.2e}, {:.2?}", start.elapsed()))
}

/// Values forced by the loss definitions and the schedule.
pub fn forced_values() -> Check {
    let ln2 = std::f64::consts::LN_2;
    let d = small_discriminator(NUM_CLASSES, 4, 4, true, 3);
    let mut r = rng(5);
    let src = Var::constant(uniform(&[2, NUM_CLASSES, 4, 4], 0.0, 1.0, &mut r));
    let tgt = Var::constant(uniform(&[2, NUM_CLASSES, 4, 4], 0.0, 1.0, &mut r));
    let l = adversarial_losses(&src, &tgt, None, &d).map_err(|e| e.to_string())?;
    close("L_d at zero scores", l.d.item(), 2.0 * ln2, 1e-9)?;
    close("L_adv at zero scores", l.adv.item(), ln2, 1e-9)?;

    let zeros = Var::constant(Array::zeros(&[1, 1, 2, 3]));
    close("entropy of zeros per element", sigmoid_entropy(&zeros).item() / 6.0, 0.5 * ln2, 1e-9)?;
    close(
        "entropy term of zero maps",
        fcdam_entropy_loss(&zeros, &zeros, 1.0, 1.0).item(),
        2.0 * 6.0 * 0.5 * ln2,
        1e-9,
    )?;

    let uniform_logits = Var::constant(Array::full(&[2, NUM_CLASSES, 3, 3], 0.7));
    let labels: Vec<u8> = (0..18).map(|i| (i % NUM_CLASSES) as u8).collect();
    let ce = weighted_cross_entropy(&uniform_logits, &labels, &[1.0; NUM_CLASSES]).map_err(|e| e.to_string())?;
    close("uniform-logit cross-entropy", ce.item(), (NUM_CLASSES as f64).ln(), 1e-6)?;

    let lr = poly_lr(1e-5, 100_000, 200_000, 0.9).map_err(|e| e.to_string())?;
    close("poly lr at half way", lr, 1e-5 * 0.5f64.powf(0.9), 1e-12)?;
    Ok(format!("2ln2 / ln2 / 0.5ln2 / ln19 / poly = {lr:.6e}"))
}

fn grad_ok(name: &str, g: panoda_core::tensor::gradcheck::GradCheck) -> Result<f64, String> {
    ensure(g.rel_err < 1e-4, || format!("{name}: relative gradient error {:.3e}", g.rel_err))?;
    Ok(g.rel_err)
}

/// Central finite differences for attention, region interaction and every
/// loss op, inputs at most 2×4×4×4.
pub fn gradient_suite() -> Check {
    let start = Instant::now();
    let mut r = rng(21);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let f = uniform(&[2, 4, 4, 4], -1.0, 1.0, &mut r);
    let gamma = Array::scalar(0.8);

    worst = worst.max(grad_ok(
        "position attention",
        check_gradients(|v| probe(&position_attention(&v[0], &v[1]).0, 1), &[f.clone(), gamma.clone()], eps),
    )?);
    worst = worst.max(grad_ok(
        "channel attention",
        check_gradients(|v| probe(&channel_attention(&v[0], &v[1]).0, 2), &[f.clone(), gamma.clone()], eps),
    )?);

    let mut store = ParamStore::new();
    let dual = DualAttention::new(&mut store, "dam", 4);
    store.set(dual.gamma_position, Array::scalar(0.6));
    store.set(dual.gamma_channel, Array::scalar(-0.4));
    let fuse_w = store.get(dual.fuse.weight).map(|v| v + 0.05);
    store.set(dual.fuse.weight, fuse_w);
    worst = worst.max(grad_ok(
        "dual attention",
        check_gradients(|v| probe(&dual.forward(&store.bind(false), &v[0]).fused, 3), &[f.clone()], eps),
    )?);

    let rdms = (0..2)
        .map(|b| {
            let b1 = uniform(&[4, 4], -2.0, 1.0, &mut r);
            let c1 = uniform(&[3, 4, 4], -1.0, 1.0, &mut r);
            let feats = f.narrow(0, b, 1).reshape(&[4, 4, 4]);
            region_construction(&b1, &c1, &feats)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    worst = worst.max(grad_ok(
        "region interaction",
        check_gradients(|v| probe(&region_interaction(&v[0], &rdms).unwrap(), 4), &[f.clone()], eps),
    )?);

    let logits = uniform(&[2, 4, 4, 4], -2.0, 2.0, &mut r);
    let labels = random_labels(32, 4, 0.2, &mut r);
    let weights = [0.5, 1.0, 1.5, 2.0];
    worst = worst.max(grad_ok(
        "weighted cross-entropy",
        check_gradients(|v| weighted_cross_entropy(&v[0], &labels, &weights).unwrap(), &[logits.clone()], eps),
    )?);
    for t in [0.0, 1.0] {
        worst = worst.max(grad_ok(
            "binary cross-entropy",
            check_gradients(|v| bce_with_logits(&v[0], t), &[f.clone()], eps),
        )?);
    }
    let b_labels: Vec<u8> = (0..32).map(|i| [0, 0, 1, 2, IGNORE][i % 5]).collect();
    let b_targets = boundary_targets(&b_labels, 2, 4, 4);
    let b_logits = uniform(&[2, 1, 4, 4], -2.0, 2.0, &mut r);
    worst = worst.max(grad_ok(
        "boundary cross-entropy",
        check_gradients(|v| boundary_bce(&v[0], &b_targets).unwrap(), &[b_logits], eps),
    )?);
    let g = uniform(&[2, 4, 4, 4], -3.0, 3.0, &mut r);
    worst = worst.max(grad_ok(
        "sigmoid entropy",
        check_gradients(|v| fcdam_entropy_loss(&v[0], &v[1], 0.3, 0.7), &[f.clone(), g], eps),
    )?);

    // Default init is too small for differences to resolve the gradient.
    let mut d = small_discriminator(4, 4, 4, false, 9);
    let ids: Vec<_> = d.store.ids().collect();
    for id in ids {
        let v = d.store.get(id).map(|x| x * 8.0);
        d.store.set(id, v);
    }
    let src = uniform(&[2, 4, 4, 4], -1.0, 1.0, &mut r);
    worst = worst.max(grad_ok(
        "adversarial loss",
        check_gradients(
            |v| {
                let l = adversarial_losses(&v[0], &v[1], None, &d).unwrap();
                l.adv
            },
            &[src, f],
            eps,
        ),
    )?);
    within("gradient suite", start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("12 checks, worst relative error {worst:.2e}, {:.2?}", start.elapsed()))
}

/// Row-stochastic attention and pixel-permutation equivariance.
pub fn attention_invariants() -> Check {
    let mut r = rng(31);
    let mut worst_row: f64 = 0.0;
    let mut worst_perm: f64 = 0.0;
    for trial in 0..100 {
        let (n, c, h, w) = (r.gen_range(1..=2), r.gen_range(1..=6), r.gen_range(1..=5), r.gen_range(1..=5));
        let hw = h * w;
        let f = uniform(&[n, c, h, w], -2.0, 2.0, &mut r);
        let gamma = Var::constant(Array::scalar(r.gen_range(-1.0..1.0)));
        let (out, pa) = position_attention(&Var::constant(f.clone()), &gamma);
        let (_, ca) = channel_attention(&Var::constant(f.clone()), &gamma);
        for (name, weights, cols) in [("position", pa.weights.data(), hw), ("channel", ca.weights.data(), c)] {
            for row in weights.chunks(cols) {
                ensure(row.iter().all(|&v| v >= 0.0), || format!("trial {trial}: negative {name} weight"))?;
                let dev = (row.iter().sum::<f64>() - 1.0).abs();
                worst_row = worst_row.max(dev);
                ensure(dev <= 1e-6, || format!("trial {trial}: {name} row sums to 1{dev:+e}"))?;
            }
        }

        let mut perm: Vec<usize> = (0..hw).collect();
        perm.shuffle(&mut r);
        let permute = |a: &Array| {
            Array::from_fn(&[n, c, h, w], |i| {
                let (bc, p) = (i / hw, i % hw);
                a.data()[bc * hw + perm[p]]
            })
        };
        let (out_p, _) = position_attention(&Var::constant(permute(&f)), &gamma);
        let want = permute(out.value());
        let dev = out_p.value().data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_perm = worst_perm.max(dev);
        ensure(dev <= 1e-10, || format!("trial {trial}: permuted output deviates by {dev:e}"))?;
    }
    Ok(format!("100 inputs, row deviation {worst_row:.1e}, permutation deviation {worst_perm:.1e}"))
}

/// Discriminator learns the domain labels with G frozen; G then fools the
/// frozen discriminator.
pub fn gan_convention() -> Check {
    let (n, h, w) = (4, 8, 8);
    let mut r = rng(41);
    let mut d = Discriminator::new(DiscriminatorConfig {
        in_channels: 1,
        ndf: 8,
        strides: DiscriminatorConfig::strides_for(h, w),
        zero_final: false,
        seed: 7,
    });
    let mut adam = Adam::new(0.9, 0.99, &d.store);
    let mean_score = |d: &Discriminator, x: &Array| -> Result<f64, String> {
        let s = discriminator_forward(d, &Var::constant(x.clone())).map_err(|e| e.to_string())?;
        Ok(s.value().data().iter().map(|&v| sigmoid(v)).sum::<f64>() / s.value().len() as f64)
    };
    for _ in 0..200 {
        let src = Var::constant(normal(&[n, 1, h, w], 1.0, &mut r));
        let tgt = Var::constant(normal(&[n, 1, h, w], -1.0, &mut r));
        let l = adversarial_losses(&src, &tgt, None, &d).map_err(|e| e.to_string())?;
        let grads = l.d_params.grads(&l.d.backward());
        adam.step(&mut d.store, &grads, 1e-3);
    }
    let src = normal(&[64, 1, h, w], 1.0, &mut r);
    let tgt = normal(&[64, 1, h, w], -1.0, &mut r);
    let (s_src, s_tgt) = (mean_score(&d, &src)?, mean_score(&d, &tgt)?);
    ensure(s_src < 0.2, || format!("source score {s_src:.3} after D training"))?;
    ensure(s_tgt > 0.8, || format!("target score {s_tgt:.3} after D training"))?;

    let mut g = ParamStore::new();
    let offset = g.add("offset", Array::zeros(&[1, 1, h, w]));
    let mut g_opt = Adam::new(0.9, 0.99, &g);
    let noise = normal(&[n, 1, h, w], -1.0, &mut r);
    let adv = |g: &ParamStore, trainable: bool| -> Result<(Var, panoda_core::tensor::Bound), String> {
        let p = g.bind(trainable);
        let items: Vec<Var> = (0..n)
            .map(|b| Var::constant(noise.narrow(0, b, 1)).add(p.var(offset)))
            .collect();
        let scores = discriminator_forward(&d, &Var::concat(&items, 0)).map_err(|e| e.to_string())?;
        Ok((bce_with_logits(&scores, 0.0), p))
    };
    let before = adv(&g, false)?.0.item();
    let d_before = d.store.iter().map(|(_, a)| a.clone()).collect::<Vec<_>>();
    for _ in 0..200 {
        let (loss, p) = adv(&g, true)?;
        let grads = p.grads(&loss.backward());
        g_opt.step(&mut g, &grads, 1e-2);
    }
    let after = adv(&g, false)?.0.item();
    ensure(d.store.iter().map(|(_, a)| a.clone()).collect::<Vec<_>>() == d_before, || {
        "discriminator moved during generator steps".into()
    })?;
    ensure(after <= 0.5 * before, || format!("adversarial loss {before:.4} -> {after:.4}"))?;
    Ok(format!(
        "scores src {s_src:.3} / tgt {s_tgt:.3}; adversarial loss {before:.3} -> {after:.3}"
    ))
}

/// `iou_report` against set arithmetic, and sector matrices against the
/// global matrix.
pub fn metric_oracles() -> Check {
    let mut r = rng(51);
    let (h, w) = (16, 16);
    for trial in 0..100 {
        let classes = r.gen_range(2..=NUM_CLASSES as u8);
        let gt = random_labels(h * w, classes, 0.15, &mut r);
        let pred: Vec<u8> = (0..h * w)
            .map(|i| if r.gen_bool(0.6) && gt[i] != IGNORE { gt[i] } else { r.gen_range(0..classes) })
            .collect();
        let mut cm = ConfusionMatrix::default();
        cm.update(&pred, &gt).map_err(|e| e.to_string())?;
        let report = iou_report(&cm).map_err(|e| e.to_string())?;
        let (ious, miou) = iou_set_oracle(&pred, &gt);
        ensure(report.per_class_iou == ious, || format!("trial {trial}: per-class IoU differs"))?;
        ensure(report.miou == miou, || format!("trial {trial}: mIoU {} vs {miou}", report.miou))?;

        let as_map = |d: Vec<u8>| LabelMap { height: h, width: w, data: d };
        let dir = directional_report(&[as_map(pred.clone())], &[as_map(gt.clone())], 8).map_err(|e| e.to_string())?;
        ensure(dir.global() == cm, || format!("trial {trial}: sector matrices do not sum to the global matrix"))?;
    }
    Ok("100 labelings exact; 8 sectors sum to global".into())
}

/// Published (network, source score, target score, gap) rows.
pub const GAP_TABLE: &[(&str, f64, f64, f64)] = &[
    ("SwiftNet R18", 75.4, 25.7, -49.7),
    ("DeepLabV3+ R18", 76.8, 25.6, -51.2),
    ("OCRNet W18s", 77.1, 25.9, -51.2),
    ("Fast-SCNN", 69.1, 24.6, -44.5),
    ("DeepLabV3+ R50", 80.1, 29.0, -51.1),
    ("PSPNet R50", 78.6, 29.5, -49.1),
    ("DNL R50", 79.3, 28.7, -50.6),
    ("Semantic-FPN R50", 74.5, 29.9, -44.6),
    ("OCRNet W18", 78.6, 30.8, -47.8),
    ("DeepLabV3+ R101", 80.9, 32.5, -48.4),
    ("PSPNet R101", 79.8, 30.4, -49.4),
    ("DANet R101", 80.4, 28.5, -51.9),
    ("DNL R101", 80.4, 32.1, -48.3),
    ("Semantic-FPN R101", 75.8, 28.8, -47.0),
    ("ResNeSt 101", 79.6, 28.8, -50.8),
    ("OCRNet W48", 80.7, 32.8, -47.9),
    ("SETR-MLA", 77.2, 35.6, -41.6),
    ("SETR-PUP", 79.3, 35.7, -43.6),
    ("ERFNet", 72.1, 16.7, -55.4),
    ("ERFNet adapted", 72.1, 34.1, -38.0),
    ("FANet R34", 71.3, 26.9, -44.4),
    ("FANet R34 adapted", 71.3, 35.7, -35.6),
    ("DANet R50", 79.3, 28.5, -50.8),
    ("DANet R50 adapted", 79.3, 42.0, -37.3),
];

pub fn gap_table() -> Check {
    for &(name, src, tgt, gap) in GAP_TABLE {
        let got = miou_gap(src, tgt);
        ensure(got == gap, || format!("{name}: gap {got} vs published {gap}"))?;
    }
    Ok(format!("{} published rows reproduced exactly", GAP_TABLE.len()))
}
