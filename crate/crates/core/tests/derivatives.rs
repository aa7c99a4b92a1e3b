use headlab_core::autodiff::{dense_hessian, gradient, hvp, jacobian};
use headlab_core::geometry::{effective_hessian_dense, effective_hessian_parts};
use headlab_core::losses::{LossKind, PairLoss};
use headlab_core::models::{Block, InitScheme, NetworkSpec};
use headlab_core::{ActivationKind, DiffMap, Tape, Tensor, Var};
use headlab_oracle::{fd_gradient, fd_jacobian, OracleTolerance};
use proptest::prelude::*;

fn smooth() -> impl Strategy<Value = ActivationKind> {
    prop_oneof![
        Just(ActivationKind::Swish),
        Just(ActivationKind::GELU),
        Just(ActivationKind::Tanh),
        Just(ActivationKind::Softplus),
    ]
}

fn head_case() -> impl Strategy<Value = (Block, Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(2usize..5, 2..4), smooth(), any::<u64>()).prop_flat_map(|(widths, act, seed)| {
        let d = widths[0];
        let k = *widths.last().unwrap();
        let head = Block::new(NetworkSpec::mlp(widths, act), InitScheme::glorot(seed)).unwrap();
        (
            Just(head),
            prop::collection::vec(-2.0f64..2.0, d),
            prop::collection::vec(-2.0f64..2.0, k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_and_jacobian_match_differences((head, z, partner) in head_case()) {
        let d = z.len();
        let x = Tensor::matrix(1, d, z.clone());
        let p = Tensor::matrix(1, partner.len(), partner.clone());
        let f = |t: &mut Tape, v: Var| {
            let h = head.apply(t, v)?;
            let c = t.constant(p.clone());
            LossKind::PairMse.build(t, h, c)
        };
        let g = gradient(&f, &x).unwrap();
        let fd = fd_gradient(|q| {
            let out = head.forward(&Tensor::matrix(1, d, q.to_vec())).unwrap();
            LossKind::PairMse.evaluate(&out, &p).unwrap()
        }, &z, 1e-6);
        let tol = OracleTolerance::new(1e-6, 1e-9, "gradient");
        prop_assert!(tol.check_slice(g.data(), &fd).is_ok());
        let j = jacobian(&head, &x).unwrap();
        let jfd = fd_jacobian(|q| head.forward(&Tensor::matrix(1, d, q.to_vec())).unwrap().into_data(), &z, 1e-6);
        prop_assert!(OracleTolerance::new(1e-6, 1e-9, "jacobian").check_slice(j.data(), &jfd.concat()).is_ok());
    }

    /// H_eff assembled as G + M equals the Hessian of the composite, and
    /// the Hessian is symmetric as an operator: uᵀHv = vᵀHu.
    #[test]
    fn effective_hessian_decomposes((head, z, partner) in head_case(), u in prop::collection::vec(-1.0f64..1.0, 4)) {
        let d = z.len();
        let x = Tensor::matrix(1, d, z);
        let p = Tensor::matrix(1, partner.len(), partner);
        let loss = LossKind::SimSiamCosine;
        let parts = effective_hessian_parts(&head, &loss, &x, &p).unwrap();
        let direct = effective_hessian_dense(&head, &loss, &x, &p).unwrap();
        let sum = parts.h_eff().unwrap();
        let scale = 1.0 + direct.max_abs();
        prop_assert!(sum.sub(&direct).unwrap().max_abs() <= 1e-10 * scale);
        let f = |t: &mut Tape, v: Var| {
            let h = head.apply(t, v)?;
            let c = t.constant(p.clone());
            loss.build(t, h, c)
        };
        let uu = Tensor::matrix(1, d, u[..d.min(4)].iter().copied().chain(std::iter::repeat(0.5)).take(d).collect());
        let vv = Tensor::matrix(1, d, (0..d).map(|i| (i as f64 * 0.7).sin()).collect());
        let a = uu.dot(&hvp(&f, &x, &vv).unwrap()).unwrap();
        let b = vv.dot(&hvp(&f, &x, &uu).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        let h = dense_hessian(&f, &x).unwrap();
        prop_assert!(h.sub(&direct).unwrap().max_abs() <= 1e-10 * scale);
    }
}
