use attnscore::ndcore::{finite_diff_check, Matrix, Tape, Var};
use attnscore::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn naive_matmul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        let mut s = 0.0;
        for k in 0..a.cols() {
            s += a.get(i, k) * b.get(k, j);
        }
        s
    })
}

/// Gradient of `Σ w ⊙ op(inputs)` against central differences, `w` fixed and random.
fn op_error(
    inputs: &[Matrix<f64>],
    seed: u64,
    build: &impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
) -> f64 {
    let shapes: Vec<(usize, usize)> = inputs.iter().map(Matrix::shape).collect();
    let flat: Vec<f64> = inputs.iter().flat_map(|m| m.as_slice().to_vec()).collect();
    let weights = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
        let out = build(&mut tape, &vars).unwrap();
        let (r, c) = tape.value(out).shape();
        random(r, c, &mut ChaCha8Rng::seed_from_u64(seed))
    };
    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let mut at = 0;
        let vars: Vec<Var> = shapes
            .iter()
            .map(|&(r, c)| {
                let m = Matrix::new(r, c, x[at..at + r * c].to_vec()).unwrap();
                at += r * c;
                tape.param(m)
            })
            .collect();
        let out = build(&mut tape, &vars)?;
        let weighted = tape.mul_const(out, weights.clone())?;
        let total = tape.sum(weighted)?;
        let value = tape.value(total).get(0, 0);
        let grads = tape.backward(total)?;
        Ok((
            value,
            grads
                .into_vec()
                .into_iter()
                .flat_map(Matrix::into_vec)
                .collect(),
        ))
    };
    finite_diff_check(objective, &flat, 1e-6).unwrap()
}

const TOL: f64 = 1e-7;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matmul_matches_triple_loop(m in 1usize..9, k in 1usize..9, n in 1usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(m, k, &mut rng);
        let b = random(k, n, &mut rng);
        prop_assert!(a.matmul(&b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
    }

    #[test]
    fn matmul_is_associative(m in 1usize..9, k in 1usize..9, n in 1usize..9, p in 1usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(m, k, &mut rng);
        let b = random(k, n, &mut rng);
        let c = random(n, p, &mut rng);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
    }

    #[test]
    fn grad_matmul(m in 1usize..9, k in 1usize..9, n in 1usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [random(m, k, &mut rng), random(k, n, &mut rng)];
        prop_assert!(op_error(&inputs, seed, &|t, v| t.matmul(v[0], v[1])) < TOL);
    }

    #[test]
    fn grad_bias_and_add(m in 1usize..9, n in 1usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [random(m, n, &mut rng), random(m, 1, &mut rng), random(m, n, &mut rng)];
        let err = op_error(&inputs, seed, &|t, v| {
            let x = t.add_bias(v[0], v[1])?;
            t.add(x, v[2])
        });
        prop_assert!(err < TOL);
    }

    #[test]
    fn grad_hadamard_and_activations(m in 1usize..9, n in 1usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [random(m, n, &mut rng), random(m, n, &mut rng)];
        let err = op_error(&inputs, seed, &|t, v| {
            let a = t.tanh(v[0])?;
            let b = t.sigmoid(v[1])?;
            t.hadamard(a, b)
        });
        prop_assert!(err < TOL);
    }

    #[test]
    fn grad_softmax_columns(m in 1usize..9, n in 1usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [random(m, n, &mut rng).scale(3.0)];
        prop_assert!(op_error(&inputs, seed, &|t, v| t.softmax_columns(v[0])) < TOL);
    }

    #[test]
    fn grad_pool_and_vec(d in 1usize..9, r in 1usize..9, n in 1usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [random(d, n, &mut rng), random(r, n, &mut rng)];
        let err = op_error(&inputs, seed, &|t, v| {
            let p = t.pool(v[0], v[1])?;
            t.vec_column_major(p)
        });
        prop_assert!(err < TOL);
    }

    #[test]
    fn grad_slicing_and_stacking(m in 2usize..9, n in 2usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [random(m, n, &mut rng), random(m, n, &mut rng)];
        let err = op_error(&inputs, seed, &|t, v| {
            let c = t.column(v[0], n - 1)?;
            let r = t.row_range(v[1], 1, m - 1)?;
            let cols = t.hstack(&[c, v[1]])?;
            let top = t.row_range(cols, 0, m - 1)?;
            let rc = t.column(r, 0)?;
            let bottom = t.hstack(&[rc, r])?;
            t.vstack(&[top, bottom])
        });
        prop_assert!(err < TOL);
    }

    #[test]
    fn grad_bce(n in 1usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
        let inputs = [random(n, 1, &mut rng)];
        let err = op_error(&inputs, seed, &move |t, v| {
            let s = t.sigmoid(v[0])?;
            t.bce(s, &labels)
        });
        prop_assert!(err < TOL);
    }
}

#[test]
fn mul_const_gradient_is_the_mask() {
    let mut tape = Tape::new();
    let x = tape.param(Matrix::filled(2, 2, 3.0));
    let mask = Matrix::from_rows(&[&[0.0, 2.0], &[1.0, 0.5]]).unwrap();
    let y = tape.mul_const(x, mask.clone()).unwrap();
    let s = tape.sum(y).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &mask);
}
