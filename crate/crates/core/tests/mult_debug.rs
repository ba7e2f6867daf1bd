use std::time::{Duration, Instant};
use vqg_core::borcherds::{lattice_vertex_engine, Lattice};
use vqg_core::linalg::StateVector;
use vqg_core::scalar::Ring;
use vqg_core::series::ShiftDir;
use vqg_core::vertex::weak_associativity_exponent;
use vqg_core::{Series, VarSet, Window, INF_HI};

#[test]
fn assoc_phase_timing() {
    let ring = Ring::rationals();
    let lattice = Lattice::new(vec![vec![2]]).unwrap();
    let e = lattice_vertex_engine(&ring, &lattice, 1, 2, 8);
    let all = e.space().enumerate();
    let states: Vec<_> = all
        .iter()
        .filter(|k| k.weight() <= 1)
        .cloned()
        .collect();
    println!("{} states", states.len());
    let probe = Window::new(vec![0, -4], vec![4, 4]);
    let vars2 = VarSet::new(&["z1", "z2"]);

    for pass in 0..2 {
    println!("pass {pass}");
    let mut t_inner = Duration::ZERO;
    let mut t_lhs = Duration::ZERO;
    let mut t_inner2 = Duration::ZERO;
    let mut t_ykey = Duration::ZERO;
    let mut t_shift = Duration::ZERO;
    let mut t_rest = Duration::ZERO;
    let total = Instant::now();
    let mut n = 0u32;
    for a in &states {
        for b in &states {
            for c in &states {
                n += 1;
                let n_exp = weak_associativity_exponent(&e, a, c);
                let cvec = StateVector::from_key(e.ring(), c.clone());

                let t = Instant::now();
                let inner = e.eval_pair(a, b, probe.hi[0]).unwrap();
                t_inner += t.elapsed();

                let t = Instant::now();
                let mut parts: Vec<(i64, Series<StateVector>)> = Vec::new();
                for (ex, u) in inner.iter() {
                    parts.push((ex[0], e.y_vec(u, &cvec, probe.hi[1]).unwrap()));
                }
                t_lhs += t.elapsed();

                let t = Instant::now();
                let inner2 = e.eval_pair(b, c, probe.hi[1]).unwrap();
                t_inner2 += t.elapsed();

                let mut rhs: Option<Series<StateVector>> = None;
                for (j_exp, v) in inner2.iter() {
                    let j = j_exp[0];
                    if j >= probe.hi[1] {
                        continue;
                    }
                    let small = probe.hi[1] - j;
                    let hi_j = probe.hi[0] + small - 1;
                    let t = Instant::now();
                    let s_j = e.y_key(a, v, hi_j).unwrap();
                    t_ykey += t.elapsed();
                    let t = Instant::now();
                    let spread = s_j
                        .shift_substitute(e.law(), ShiftDir::SecondSmall, "z1", "z2", small)
                        .unwrap()
                        .shift_var("z2", j);
                    rhs = Some(match rhs {
                        None => spread,
                        Some(acc) => acc.add(&spread),
                    });
                    t_shift += t.elapsed();
                }
                let t = Instant::now();
                let _rhs = rhs.unwrap_or_else(|| {
                    Series::zero(vars2.clone(), Window::new(vec![0, 0], vec![INF_HI, INF_HI]))
                });
                let _ = (parts, n_exp);
                t_rest += t.elapsed();
            }
        }
    }
    println!(
        "{n} triples in {:?}: inner {:?} lhs {:?} inner2 {:?} ykey {:?} shift+add {:?} rest {:?}",
        total.elapsed(),
        t_inner,
        t_lhs,
        t_inner2,
        t_ykey,
        t_shift,
        t_rest
    );
    }
}
