//! Second-order forward-mode jets and a postfix evaluation tape.
//!
//! A [`Jet`] carries a value, its gradient and its (packed, symmetric)
//! Hessian with respect to up to [`MAX_DIM`] chart variables. Expressions are
//! compiled once into a [`Tape`] and evaluated with a small value stack.

use super::expr::{Expr, Func};
use crate::error::{Error, Result};

pub const MAX_DIM: usize = 6;
pub const HESS_LEN: usize = MAX_DIM * (MAX_DIM + 1) / 2;

/// Packed index of the symmetric pair `(i, j)`.
#[inline]
pub const fn hidx(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    b * (b + 1) / 2 + a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: [f64; MAX_DIM],
    pub h: [f64; HESS_LEN],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            d: [0.0; MAX_DIM],
            h: [0.0; HESS_LEN],
        }
    }

    pub fn variable(v: f64, i: usize) -> Self {
        let mut j = Jet::constant(v);
        j.d[i] = 1.0;
        j
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.h[hidx(i, j)]
    }

    fn is_finite(&self, n: usize, order: u8) -> bool {
        if !self.v.is_finite() {
            return false;
        }
        if order >= 1 && !self.d[..n].iter().all(|x| x.is_finite()) {
            return false;
        }
        order < 2
            || self.h[..hidx(n - 1, n - 1) + 1]
                .iter()
                .all(|x| x.is_finite())
    }
}

/// Derivative bookkeeping shared by all jet operations of one evaluation.
#[derive(Debug, Clone, Copy)]
struct Ctx {
    n: usize,
    order: u8,
}

impl Ctx {
    /// Applies a scalar function with value `f0` and derivatives `f1`, `f2`.
    fn chain(self, a: &Jet, f0: f64, f1: f64, f2: f64) -> Jet {
        let mut r = Jet::constant(f0);
        if self.order >= 1 {
            for i in 0..self.n {
                r.d[i] = f1 * a.d[i];
            }
        }
        if self.order >= 2 {
            for j in 0..self.n {
                for i in 0..=j {
                    let k = hidx(i, j);
                    r.h[k] = f1 * a.h[k] + f2 * a.d[i] * a.d[j];
                }
            }
        }
        r
    }

    fn linear(self, a: &Jet, b: &Jet, s: f64) -> Jet {
        let mut r = Jet::constant(a.v + s * b.v);
        if self.order >= 1 {
            for i in 0..self.n {
                r.d[i] = a.d[i] + s * b.d[i];
            }
        }
        if self.order >= 2 {
            for k in 0..=hidx(self.n - 1, self.n - 1) {
                r.h[k] = a.h[k] + s * b.h[k];
            }
        }
        r
    }

    fn mul(self, a: &Jet, b: &Jet) -> Jet {
        let mut r = Jet::constant(a.v * b.v);
        if self.order >= 1 {
            for i in 0..self.n {
                r.d[i] = a.v * b.d[i] + b.v * a.d[i];
            }
        }
        if self.order >= 2 {
            for j in 0..self.n {
                for i in 0..=j {
                    let k = hidx(i, j);
                    r.h[k] = a.v * b.h[k] + b.v * a.h[k] + a.d[i] * b.d[j] + a.d[j] * b.d[i];
                }
            }
        }
        r
    }

    fn recip(self, a: &Jet) -> Result<Jet> {
        if a.v == 0.0 {
            return Err(Error::Domain("division by zero".into()));
        }
        let r = 1.0 / a.v;
        Ok(self.chain(a, r, -r * r, 2.0 * r * r * r))
    }

    fn powi(self, a: &Jet, k: i32) -> Result<Jet> {
        if k == 0 {
            return Ok(Jet::constant(1.0));
        }
        if k < 0 && a.v == 0.0 {
            return Err(Error::Domain("negative power of zero".into()));
        }
        let x = a.v;
        let kf = k as f64;
        let f1 = kf * x.powi(k - 1);
        let f2 = if k == 1 {
            0.0
        } else {
            kf * (kf - 1.0) * x.powi(k - 2)
        };
        Ok(self.chain(a, x.powi(k), f1, f2))
    }

    fn powc(self, a: &Jet, c: f64) -> Result<Jet> {
        if a.v <= 0.0 {
            return Err(Error::Domain(format!(
                "non-integer power {c} of non-positive base {}",
                a.v
            )));
        }
        let x = a.v;
        let p = x.powf(c);
        Ok(self.chain(a, p, c * p / x, c * (c - 1.0) * p / (x * x)))
    }

    fn call(self, f: Func, a: &Jet) -> Result<Jet> {
        let x = a.v;
        Ok(match f {
            Func::Sin => {
                let (s, c) = x.sin_cos();
                self.chain(a, s, c, -s)
            }
            Func::Cos => {
                let (s, c) = x.sin_cos();
                self.chain(a, c, -s, -c)
            }
            Func::Sinh => {
                let (s, c) = (x.sinh(), x.cosh());
                self.chain(a, s, c, s)
            }
            Func::Cosh => {
                let (s, c) = (x.sinh(), x.cosh());
                self.chain(a, c, s, c)
            }
            Func::Exp => {
                let e = x.exp();
                self.chain(a, e, e, e)
            }
            Func::Log => {
                if x <= 0.0 {
                    return Err(Error::Domain(format!("log of non-positive value {x}")));
                }
                self.chain(a, x.ln(), 1.0 / x, -1.0 / (x * x))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    PowI(i32),
    PowC(f64),
    Pow,
    Call(Func),
}

/// Postfix program for one scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    depth: usize,
}

impl Tape {
    pub fn compile(e: &Expr) -> Tape {
        let mut ops = Vec::new();
        emit(e, &mut ops);
        let mut depth = 0usize;
        let mut cur = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Var(_) => cur += 1,
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => cur -= 1,
                _ => {}
            }
            depth = depth.max(cur);
        }
        Tape { ops, depth }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.ops.as_slice(), [Op::Const(_)])
    }

    /// Evaluates the tape at `x` computing derivatives up to `order`.
    pub fn eval(&self, x: &[f64], order: u8) -> Result<Jet> {
        let n = x.len();
        debug_assert!(n >= 1 && n <= MAX_DIM);
        let cx = Ctx { n, order };
        let mut stack: Vec<Jet> = Vec::with_capacity(self.depth);
        for op in &self.ops {
            let r = match op {
                Op::Const(c) => Jet::constant(*c),
                Op::Var(i) => {
                    if *i >= n {
                        return Err(Error::Domain(format!(
                            "variable x{} outside dimension {n}",
                            i + 1
                        )));
                    }
                    if order >= 1 {
                        Jet::variable(x[*i], *i)
                    } else {
                        Jet::constant(x[*i])
                    }
                }
                Op::Neg => {
                    let a = stack.pop().unwrap();
                    cx.linear(&Jet::constant(0.0), &a, -1.0)
                }
                Op::PowI(k) => {
                    let a = stack.pop().unwrap();
                    cx.powi(&a, *k)?
                }
                Op::PowC(c) => {
                    let a = stack.pop().unwrap();
                    cx.powc(&a, *c)?
                }
                Op::Call(f) => {
                    let a = stack.pop().unwrap();
                    cx.call(*f, &a)?
                }
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => {
                    let b = stack.pop().unwrap();
                    let a = stack.pop().unwrap();
                    match op {
                        Op::Add => cx.linear(&a, &b, 1.0),
                        Op::Sub => cx.linear(&a, &b, -1.0),
                        Op::Mul => cx.mul(&a, &b),
                        Op::Div => cx.mul(&a, &cx.recip(&b)?),
                        _ => {
                            if a.v <= 0.0 {
                                return Err(Error::Domain(format!(
                                    "variable exponent requires a positive base, got {}",
                                    a.v
                                )));
                            }
                            let ln = cx.call(Func::Log, &a)?;
                            cx.call(Func::Exp, &cx.mul(&b, &ln))?
                        }
                    }
                }
            };
            stack.push(r);
        }
        let r = stack.pop().unwrap();
        if !r.is_finite(n, order) {
            return Err(Error::Domain("non-finite expression value".into()));
        }
        Ok(r)
    }
}

fn emit(e: &Expr, ops: &mut Vec<Op>) {
    if !matches!(e, Expr::Var(_)) {
        if let Some(c) = e.constant_value() {
            if c.is_finite() {
                ops.push(Op::Const(c));
                return;
            }
        }
    }
    match e {
        Expr::Num(v) => ops.push(Op::Const(*v)),
        Expr::Pi => ops.push(Op::Const(std::f64::consts::PI)),
        Expr::Var(i) => ops.push(Op::Var(*i)),
        Expr::Neg(a) => {
            emit(a, ops);
            ops.push(Op::Neg);
        }
        Expr::Call(f, a) => {
            emit(a, ops);
            ops.push(Op::Call(*f));
        }
        Expr::Pow(a, b) => {
            emit(a, ops);
            match b.constant_value() {
                Some(c) if c.fract() == 0.0 && c.abs() <= 64.0 => ops.push(Op::PowI(c as i32)),
                Some(c) if c.is_finite() => ops.push(Op::PowC(c)),
                _ => {
                    emit(b, ops);
                    ops.push(Op::Pow);
                }
            }
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            emit(a, ops);
            emit(b, ops);
            ops.push(match e {
                Expr::Add(..) => Op::Add,
                Expr::Sub(..) => Op::Sub,
                Expr::Mul(..) => Op::Mul,
                _ => Op::Div,
            });
        }
    }
}
