//! Finite-difference checks shared by the gradient tests and the acceptance
//! suite. Each check returns the worst relative error it saw.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use liftgan::gan::{
    disc_loss_logits, gen_loss_logits, lift_offsets, poses_to_matrix, project_with, GeneratorLoss, TrainConfig,
    TrainState,
};
use liftgan::geometry::{
    back_project, back_project_vjp, depth_from_offset, depth_from_offset_vjp, perspective_project,
    perspective_project_vjp, rotate_about_pivot, rotate_about_pivot_vjp, rotation_from_angles, DepthOffsets,
    LiftConfig, Pose2D, Skeleton3D, ViewRanges, NUM_JOINTS, POSE_DIM, SKELETON_DIM,
};
use liftgan::gradcheck::{check_gradient, check_params, flat_grads, flat_params};
use liftgan::nn::{
    softmax_cross_entropy, BatchNorm, Linear, Matrix, Mode, NetOptions, NetShape, Parameterized, Relu, ResidualMlp,
};

/// Tolerance for single layers, geometry operations and losses.
pub const LAYER_TOLERANCE: f64 = 1e-4;
/// Tolerance for the generator objective through every stage.
pub const COMPOSITE_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl Check {
    fn layer(name: &'static str, max_rel_error: f64) -> Self {
        Self {
            name,
            max_rel_error,
            tolerance: LAYER_TOLERANCE,
        }
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, random_vec(rng, rows * cols, scale))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose2D {
    Pose2D::from_flat(&random_vec(rng, POSE_DIM, 0.15)).unwrap()
}

fn linear_layer(rng: &mut ChaCha8Rng, i: usize, o: usize) -> Linear {
    let mut l = Linear::new(i, o);
    l.weight = random_matrix(rng, o, i, 1.0);
    l.bias = random_vec(rng, o, 0.5);
    l
}

pub fn linear() -> Check {
    let mut r = rng(1);
    let (n, i, o) = (5, 4, 3);
    let mut layer = linear_layer(&mut r, i, o);
    let x = random_matrix(&mut r, n, i, 1.0);
    let w = random_vec(&mut r, n * o, 1.0);
    layer.forward(x.clone());
    let gx = layer.backward(&Matrix::from_vec(n, o, w.clone()), true, true).unwrap();
    let e_in = check_gradient(
        |p| dot(layer.infer(&Matrix::from_vec(n, i, p.to_vec())).data(), &w),
        x.data(),
        gx.data(),
    );

    let mut params = layer.weight.data().to_vec();
    params.extend_from_slice(&layer.bias);
    let mut analytic = layer.grad_weight.data().to_vec();
    analytic.extend_from_slice(&layer.grad_bias);
    let e_par = check_gradient(
        |p| {
            let mut l = Linear::new(i, o);
            l.weight = Matrix::from_vec(o, i, p[..o * i].to_vec());
            l.bias = p[o * i..].to_vec();
            dot(l.infer(&x).data(), &w)
        },
        &params,
        &analytic,
    );
    Check::layer("linear", e_in.max(e_par))
}

fn batchnorm_mode(mode: Mode, name: &'static str) -> Check {
    let mut r = rng(2);
    let (n, d) = (6, 4);
    let mut bn = BatchNorm::new(d);
    bn.gamma = random_vec(&mut r, d, 1.5);
    bn.beta = random_vec(&mut r, d, 0.5);
    bn.running_mean = random_vec(&mut r, d, 0.5);
    bn.running_var = random_vec(&mut r, d, 0.5).iter().map(|v| v.abs() + 0.5).collect();
    let x = random_matrix(&mut r, n, d, 2.0);
    let w = random_vec(&mut r, n * d, 1.0);
    let eval = |bn: &BatchNorm, x: Matrix| {
        let mut b = bn.clone();
        let frozen = if mode == Mode::Train { Mode::TrainFrozen } else { mode };
        dot(b.forward(x, frozen).unwrap().data(), &w)
    };
    let mut work = bn.clone();
    work.forward(x.clone(), mode).unwrap();
    let gx = work.backward(&Matrix::from_vec(n, d, w.clone()), true);
    let e_in = check_gradient(|p| eval(&bn, Matrix::from_vec(n, d, p.to_vec())), x.data(), gx.data());

    let mut params = bn.gamma.clone();
    params.extend_from_slice(&bn.beta);
    let mut analytic = work.grad_gamma.clone();
    analytic.extend_from_slice(&work.grad_beta);
    let e_par = check_gradient(
        |p| {
            let mut b = bn.clone();
            b.gamma = p[..d].to_vec();
            b.beta = p[d..].to_vec();
            eval(&b, x.clone())
        },
        &params,
        &analytic,
    );
    Check::layer(name, e_in.max(e_par))
}

pub fn batchnorm_train() -> Check {
    batchnorm_mode(Mode::Train, "batchnorm (batch statistics)")
}

pub fn batchnorm_inference() -> Check {
    batchnorm_mode(Mode::Inference, "batchnorm (running statistics)")
}

pub fn relu() -> Check {
    let mut r = rng(3);
    let x = random_matrix(&mut r, 4, 5, 1.0);
    let w = random_vec(&mut r, 20, 1.0);
    let mut act = Relu::default();
    act.forward(x.clone());
    let g = act.backward(Matrix::from_vec(4, 5, w.clone()));
    let e = check_gradient(
        |p| dot(Relu::default().forward(Matrix::from_vec(4, 5, p.to_vec())).data(), &w),
        x.data(),
        g.data(),
    );
    Check::layer("relu", e)
}

pub fn softmax_xent() -> Check {
    let mut r = rng(4);
    let logits = random_matrix(&mut r, 5, 3, 3.0);
    let labels = [0, 2, 1, 1, 0];
    let (_, g) = softmax_cross_entropy(&logits, &labels);
    let e = check_gradient(
        |p| softmax_cross_entropy(&Matrix::from_vec(5, 3, p.to_vec()), &labels).0,
        logits.data(),
        g.data(),
    );
    Check::layer("softmax cross-entropy", e)
}

/// A whole residual network (width 8, 2 blocks) in training mode: every
/// input and every parameter.
pub fn residual_network() -> Check {
    let mut r = rng(5);
    let shape = NetShape {
        in_dim: 6,
        width: 8,
        blocks: 2,
        out_dim: 3,
    };
    let mut net = ResidualMlp::new(shape, &NetOptions::default());
    net.init_parameters(11, false);
    // Non-trivial affine batch-norm parameters.
    net.visit_params(&mut |name, _, v, _| {
        if name.contains("bn") {
            v.iter_mut().for_each(|x| *x += 0.3 * (x.abs() + 0.5).sin());
        }
    });
    let (n, out) = (4, 3);
    let x = random_matrix(&mut r, n, shape.in_dim, 1.0);
    let w = random_vec(&mut r, n * out, 1.0);
    net.forward(x.clone(), Mode::Train).unwrap();
    net.zero_grad();
    let gx = net.backward(&Matrix::from_vec(n, out, w.clone()), true, true).unwrap();
    let analytic = flat_grads(&mut net);
    let base = net.clone();
    let e_in = check_gradient(
        |p| {
            let mut m = base.clone();
            dot(
                m.forward(Matrix::from_vec(n, shape.in_dim, p.to_vec()), Mode::TrainFrozen)
                    .unwrap()
                    .data(),
                &w,
            )
        },
        x.data(),
        gx.data(),
    );
    let all: Vec<usize> = (0..analytic.len()).collect();
    let e_par = check_params(&mut net, &analytic, &all, |m| {
        dot(m.clone().forward(x.clone(), Mode::TrainFrozen).unwrap().data(), &w)
    });
    Check::layer("residual network", e_in.max(e_par))
}

pub fn depth_clamp() -> Check {
    let mut r = rng(6);
    let cfg = LiftConfig::default();
    let o = random_vec(&mut r, NUM_JOINTS, 3.0);
    let w = random_vec(&mut r, NUM_JOINTS, 1.0);
    let z = |p: &[f64]| {
        let mut a = [0.0; NUM_JOINTS];
        a.copy_from_slice(p);
        depth_from_offset(&DepthOffsets(a), &cfg).unwrap()
    };
    let mut gz = [0.0; NUM_JOINTS];
    gz.copy_from_slice(&w);
    let g = depth_from_offset_vjp(&z(&o), &gz);
    let mut e = check_gradient(|p| dot(&z(p).z, &w), &o, &g);
    // Deep in the clamped region the depth is constant.
    let clamped: Vec<f64> = o.iter().map(|v| v - 20.0).collect();
    let g = depth_from_offset_vjp(&z(&clamped), &gz);
    e = e.max(check_gradient(|p| dot(&z(p).z, &w), &clamped, &g));
    Check::layer("depth from offset", e)
}

pub fn back_projection() -> Check {
    let mut r = rng(7);
    let pose = random_pose(&mut r);
    let z: Vec<f64> = (0..NUM_JOINTS).map(|_| r.random_range(8.0..12.0)).collect();
    let w = random_vec(&mut r, SKELETON_DIM, 1.0);
    let mut zz = [0.0; NUM_JOINTS];
    zz.copy_from_slice(&z);
    let (gp, gz) = back_project_vjp(&pose, &zz, &Skeleton3D::from_flat(&w).unwrap());
    let mut x = pose.to_flat().to_vec();
    x.extend_from_slice(&z);
    let mut analytic = gp.to_flat().to_vec();
    analytic.extend_from_slice(&gz);
    let e = check_gradient(
        |p| {
            let mut zz = [0.0; NUM_JOINTS];
            zz.copy_from_slice(&p[POSE_DIM..]);
            dot(
                &back_project(&Pose2D::from_flat(&p[..POSE_DIM]).unwrap(), &zz)
                    .unwrap()
                    .to_flat(),
                &w,
            )
        },
        &x,
        &analytic,
    );
    Check::layer("back-projection", e)
}

fn random_skeleton(r: &mut ChaCha8Rng, depth: f64) -> Skeleton3D {
    let mut v = random_vec(r, SKELETON_DIM, 1.0);
    for j in 0..NUM_JOINTS {
        v[3 * j + 2] += depth;
    }
    Skeleton3D::from_flat(&v).unwrap()
}

pub fn pivot_rotation() -> Check {
    let mut r = rng(8);
    let cfg = LiftConfig::default();
    let rot = rotation_from_angles(137.0, 14.0).unwrap();
    let w = random_vec(&mut r, SKELETON_DIM, 1.0);
    let mut worst: f64 = 0.0;
    // Near the pivot nothing is clamped; far behind it some joints are.
    for depth in [10.0, 19.5] {
        let sk = random_skeleton(&mut r, depth);
        let rotated = rotate_about_pivot(&sk, &rot, &cfg);
        let g = rotate_about_pivot_vjp(&rotated, &rot, &Skeleton3D::from_flat(&w).unwrap());
        let e = check_gradient(
            |p| {
                let s = Skeleton3D::from_flat(p).unwrap();
                dot(&rotate_about_pivot(&s, &rot, &cfg).skeleton.to_flat(), &w)
            },
            &sk.to_flat(),
            &g.to_flat(),
        );
        worst = worst.max(e);
    }
    Check::layer("rotation about the pivot", worst)
}

pub fn projection() -> Check {
    let mut r = rng(9);
    let sk = random_skeleton(&mut r, 10.0);
    let w = random_vec(&mut r, POSE_DIM, 1.0);
    let g = perspective_project_vjp(&sk, &Pose2D::from_flat(&w).unwrap());
    let e = check_gradient(
        |p| {
            dot(
                &perspective_project(&Skeleton3D::from_flat(p).unwrap())
                    .unwrap()
                    .to_flat(),
                &w,
            )
        },
        &sk.to_flat(),
        &g.to_flat(),
    );
    Check::layer("perspective projection", e)
}

/// Lift, random re-imaging and root-centering chained over a batch.
pub fn lift_and_project() -> Check {
    let mut r = rng(10);
    let cfg = LiftConfig::default();
    let n = 3;
    let x = poses_to_matrix(&(0..n).map(|_| random_pose(&mut r)).collect::<Vec<_>>());
    let offsets = random_matrix(&mut r, n, NUM_JOINTS, 1.0);
    let ranges = ViewRanges::default();
    let rots: Vec<_> = (0..n).map(|_| ranges.sample(&mut r, cfg.elevation_sense)).collect();
    let w = random_vec(&mut r, n * POSE_DIM, 1.0);
    let lifted = lift_offsets(&x, &offsets, &cfg).unwrap();
    let fake = project_with(&lifted.skeletons, rots.clone(), &cfg, true).unwrap();
    let g_sk = fake.backward(&Matrix::from_vec(n, POSE_DIM, w.clone())).unwrap();
    let g = lifted.backward(&g_sk);
    let e = check_gradient(
        |p| {
            let l = lift_offsets(&x, &Matrix::from_vec(n, NUM_JOINTS, p.to_vec()), &cfg).unwrap();
            dot(
                project_with(&l.skeletons, rots.clone(), &cfg, true)
                    .unwrap()
                    .poses
                    .data(),
                &w,
            )
        },
        offsets.data(),
        g.data(),
    );
    Check::layer("lift, rotate, project, center", e)
}

pub fn gan_losses() -> Check {
    let mut r = rng(11);
    let logits = random_matrix(&mut r, 6, 2, 3.0);
    let (_, g) = disc_loss_logits(&logits, 4);
    let mut e = check_gradient(
        |p| disc_loss_logits(&Matrix::from_vec(6, 2, p.to_vec()), 4).0,
        logits.data(),
        g.data(),
    );
    for variant in [GeneratorLoss::NonSaturating, GeneratorLoss::Minimax] {
        let (_, g) = gen_loss_logits(&logits, variant);
        e = e.max(check_gradient(
            |p| gen_loss_logits(&Matrix::from_vec(6, 2, p.to_vec()), variant).0,
            logits.data(),
            g.data(),
        ));
    }
    Check::layer("GAN losses", e)
}

/// The configuration of the composite checks: width 8, 2 blocks, batch 4.
pub fn tiny_config(freeze_disc_stats: bool) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        width: 8,
        generator_blocks: 2,
        discriminator_blocks: 2,
        zero_init_generator_output: false,
        freeze_disc_stats_for_generator: freeze_disc_stats,
        ..TrainConfig::default()
    }
}

/// Gradient of the generator loss with respect to every generator
/// parameter, through generator, lift, random projection and
/// discriminator, using the same code path as a training step.
fn composite(freeze_disc_stats: bool) -> f64 {
    let mut r = rng(12);
    let mut state = TrainState::new(tiny_config(freeze_disc_stats)).unwrap();
    let batch = |r: &mut ChaCha8Rng| poses_to_matrix(&(0..4).map(|_| random_pose(r)).collect::<Vec<_>>());
    // A few real steps so both networks leave their initial state.
    for _ in 0..3 {
        let (a, b) = (batch(&mut r), batch(&mut r));
        state.train_step(&a, &b).unwrap();
    }
    let x = batch(&mut r);
    let ranges = ViewRanges::default();
    let rots: Vec<_> = (0..4)
        .map(|_| ranges.sample(&mut r, state.config.lift.elevation_sense))
        .collect();
    state.generator_objective(&x, rots.clone(), true).unwrap();
    let analytic = flat_grads(&mut state.generator);
    assert_eq!(analytic.len(), flat_params(&mut state.generator).len());
    let mut worst: f64 = 0.0;
    for (i, &grad) in analytic.iter().enumerate() {
        let f = |s: &mut TrainState, delta: f64| {
            liftgan::gradcheck::nudge_param(&mut s.generator, i, delta);
            let v = s.generator_objective(&x, rots.clone(), false).unwrap();
            liftgan::gradcheck::nudge_param(&mut s.generator, i, -delta);
            v
        };
        let h = liftgan::gradcheck::FD_STEP;
        let numeric = (f(&mut state, h) - f(&mut state, -h)) / (2.0 * h);
        worst = worst.max(liftgan::gradcheck::relative_error(grad, numeric));
    }
    worst
}

pub fn composite_generator_objective() -> Check {
    Check {
        name: "generator objective end to end",
        max_rel_error: composite(true).max(composite(false)),
        tolerance: COMPOSITE_TOLERANCE,
    }
}

/// Discriminator loss on a stacked real/fake batch with respect to every
/// discriminator parameter.
pub fn discriminator_objective() -> Check {
    let mut r = rng(13);
    let mut state = TrainState::new(tiny_config(true)).unwrap();
    let real = poses_to_matrix(&(0..4).map(|_| random_pose(&mut r)).collect::<Vec<_>>());
    let fake = poses_to_matrix(&(0..4).map(|_| random_pose(&mut r)).collect::<Vec<_>>());
    let batch = real.vstack(&fake);
    let d = &mut state.discriminator;
    let logits = d.logits(&batch, Mode::Train).unwrap();
    let (_, g) = disc_loss_logits(&logits, 4);
    d.zero_grad();
    d.backward(&g, true, false);
    let analytic = flat_grads(d);
    let all: Vec<usize> = (0..analytic.len()).collect();
    let e = check_params(d, &analytic, &all, |d| {
        let l = d.logits(&batch, Mode::TrainFrozen).unwrap();
        d.net.clear_cache();
        disc_loss_logits(&l, 4).0
    });
    Check {
        name: "discriminator objective",
        max_rel_error: e,
        tolerance: COMPOSITE_TOLERANCE.min(LAYER_TOLERANCE),
    }
}

pub fn all_checks() -> Vec<Check> {
    vec![
        linear(),
        batchnorm_train(),
        batchnorm_inference(),
        relu(),
        softmax_xent(),
        residual_network(),
        depth_clamp(),
        back_projection(),
        pivot_rotation(),
        projection(),
        lift_and_project(),
        gan_losses(),
        discriminator_objective(),
        composite_generator_objective(),
    ]
}
