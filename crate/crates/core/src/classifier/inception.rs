//! Inception-V3 classifier. Hidden blocks: Stem, Inception-A,
//! Reduction-A, Inception-B, Reduction-B, Inception-C and the global
//! average pool, each of which is a tap point. Modules are expressed as
//! parallel branches of conv/pool ops whose outputs concatenate along
//! the channel axis.

use ndarray::{concatenate, s, Array2, Array4, ArrayViewD, ArrayViewMutD, Axis};
use rand::rngs::StdRng;

use featsent_nn::linear::{Linear, LinearGrads};
use featsent_nn::pool::{
    avg_pool2d, avg_pool2d_backward, global_avg_pool, global_avg_pool_backward, max_pool2d,
    max_pool2d_backward, MaxPoolCache,
};
use featsent_nn::Real;

use super::block::{ConvBn, ConvBnCache, ConvBnGrads};
use super::ClassifierSpec;

pub const INCEPTION_TAPS: [&str; 7] = [
    "Stem",
    "Inception-A",
    "Reduction-A",
    "Inception-B",
    "Reduction-B",
    "Inception-C",
    "Avg-pool",
];

#[derive(Debug, Clone)]
enum BranchOp<F> {
    Conv(ConvBn<F>),
    AvgPool { kernel: usize, stride: usize, padding: usize },
    MaxPool { kernel: usize, stride: usize, padding: usize },
    /// Two convolutions applied to the same input, outputs concatenated.
    Fork(ConvBn<F>, ConvBn<F>),
}

#[derive(Debug)]
enum BranchOpCache<F> {
    Conv(ConvBnCache<F>),
    AvgPool { in_hw: (usize, usize) },
    MaxPool(MaxPoolCache),
    Fork(ConvBnCache<F>, ConvBnCache<F>, usize),
}

#[derive(Debug, Clone)]
enum BranchOpGrads<F> {
    Conv(ConvBnGrads<F>),
    None,
    Fork(ConvBnGrads<F>, ConvBnGrads<F>),
}

#[derive(Debug, Clone)]
struct Branch<F> {
    ops: Vec<BranchOp<F>>,
}

type BranchCache<F> = Vec<BranchOpCache<F>>;
type BranchGrads<F> = Vec<BranchOpGrads<F>>;

impl<F: Real> Branch<F> {
    fn forward_eval(&self, x: &Array4<F>) -> Array4<F> {
        let mut cur = x.clone();
        for op in &self.ops {
            cur = match op {
                BranchOp::Conv(c) => c.forward_eval(&cur),
                BranchOp::AvgPool { kernel, stride, padding } => {
                    avg_pool2d(&cur, *kernel, *stride, *padding)
                }
                BranchOp::MaxPool { kernel, stride, padding } => {
                    max_pool2d(&cur, *kernel, *stride, *padding).0
                }
                BranchOp::Fork(a, b) => {
                    let ya = a.forward_eval(&cur);
                    let yb = b.forward_eval(&cur);
                    concatenate(Axis(1), &[ya.view(), yb.view()]).unwrap()
                }
            };
        }
        cur
    }

    fn forward_eval_cached(&self, x: &Array4<F>, store_input: bool) -> (Array4<F>, BranchCache<F>) {
        let mut caches = Vec::with_capacity(self.ops.len());
        let mut cur = x.clone();
        for op in &self.ops {
            cur = match op {
                BranchOp::Conv(c) => {
                    let (y, cache) = c.forward_eval_cached(&cur, store_input);
                    caches.push(BranchOpCache::Conv(cache));
                    y
                }
                BranchOp::AvgPool { kernel, stride, padding } => {
                    let (_, _, h, w) = cur.dim();
                    caches.push(BranchOpCache::AvgPool { in_hw: (h, w) });
                    avg_pool2d(&cur, *kernel, *stride, *padding)
                }
                BranchOp::MaxPool { kernel, stride, padding } => {
                    let (y, cache) = max_pool2d(&cur, *kernel, *stride, *padding);
                    caches.push(BranchOpCache::MaxPool(cache));
                    y
                }
                BranchOp::Fork(a, b) => {
                    let (ya, ca) = a.forward_eval_cached(&cur, store_input);
                    let (yb, cb) = b.forward_eval_cached(&cur, store_input);
                    let split = ya.dim().1;
                    caches.push(BranchOpCache::Fork(ca, cb, split));
                    concatenate(Axis(1), &[ya.view(), yb.view()]).unwrap()
                }
            };
        }
        (cur, caches)
    }

    fn forward_train(&mut self, x: &Array4<F>) -> (Array4<F>, BranchCache<F>) {
        let mut caches = Vec::with_capacity(self.ops.len());
        let mut cur = x.clone();
        for op in &mut self.ops {
            cur = match op {
                BranchOp::Conv(c) => {
                    let (y, cache) = c.forward_train(&cur);
                    caches.push(BranchOpCache::Conv(cache));
                    y
                }
                BranchOp::AvgPool { kernel, stride, padding } => {
                    let (_, _, h, w) = cur.dim();
                    caches.push(BranchOpCache::AvgPool { in_hw: (h, w) });
                    avg_pool2d(&cur, *kernel, *stride, *padding)
                }
                BranchOp::MaxPool { kernel, stride, padding } => {
                    let (y, cache) = max_pool2d(&cur, *kernel, *stride, *padding);
                    caches.push(BranchOpCache::MaxPool(cache));
                    y
                }
                BranchOp::Fork(a, b) => {
                    let (ya, ca) = a.forward_train(&cur);
                    let (yb, cb) = b.forward_train(&cur);
                    let split = ya.dim().1;
                    caches.push(BranchOpCache::Fork(ca, cb, split));
                    concatenate(Axis(1), &[ya.view(), yb.view()]).unwrap()
                }
            };
        }
        (cur, caches)
    }

    fn backward(
        &self,
        cache: &BranchCache<F>,
        gout: &Array4<F>,
        mut grads: Option<&mut BranchGrads<F>>,
    ) -> Array4<F> {
        let mut d = gout.clone();
        for (i, op) in self.ops.iter().enumerate().rev() {
            let og = grads.as_mut().map(|g| &mut g[i]);
            d = match (op, &cache[i]) {
                (BranchOp::Conv(c), BranchOpCache::Conv(cc)) => {
                    let cg = og.map(|g| match g {
                        BranchOpGrads::Conv(cg) => cg,
                        _ => unreachable!("grad slot mismatch"),
                    });
                    c.backward(cc, &d, cg)
                }
                (BranchOp::AvgPool { kernel, stride, padding }, BranchOpCache::AvgPool { in_hw }) => {
                    avg_pool2d_backward(*in_hw, *kernel, *stride, *padding, &d)
                }
                (BranchOp::MaxPool { .. }, BranchOpCache::MaxPool(mc)) => {
                    max_pool2d_backward(mc, &d)
                }
                (BranchOp::Fork(a, b), BranchOpCache::Fork(ca, cb, split)) => {
                    let da = d.slice(s![.., ..*split, .., ..]).to_owned();
                    let db = d.slice(s![.., *split.., .., ..]).to_owned();
                    let (ga, gb) = match og {
                        Some(BranchOpGrads::Fork(ga, gb)) => (Some(ga), Some(gb)),
                        None => (None, None),
                        _ => unreachable!("grad slot mismatch"),
                    };
                    let mut dx = a.backward(ca, &da, ga);
                    dx += &b.backward(cb, &db, gb);
                    dx
                }
                _ => unreachable!("cache slot mismatch"),
            };
        }
        d
    }

    fn zero_grads(&self) -> BranchGrads<F> {
        self.ops
            .iter()
            .map(|op| match op {
                BranchOp::Conv(c) => BranchOpGrads::Conv(c.zero_grads()),
                BranchOp::Fork(a, b) => BranchOpGrads::Fork(a.zero_grads(), b.zero_grads()),
                _ => BranchOpGrads::None,
            })
            .collect()
    }

    fn convs(&self) -> Vec<&ConvBn<F>> {
        let mut v = Vec::new();
        for op in &self.ops {
            match op {
                BranchOp::Conv(c) => v.push(c),
                BranchOp::Fork(a, b) => {
                    v.push(a);
                    v.push(b);
                }
                _ => {}
            }
        }
        v
    }

    fn convs_mut(&mut self) -> Vec<&mut ConvBn<F>> {
        let mut v = Vec::new();
        for op in &mut self.ops {
            match op {
                BranchOp::Conv(c) => v.push(c),
                BranchOp::Fork(a, b) => {
                    v.push(a);
                    v.push(b);
                }
                _ => {}
            }
        }
        v
    }
}

fn grad_convs<'a, F: Real>(grads: &'a BranchGrads<F>, out: &mut Vec<ArrayViewD<'a, F>>) {
    for g in grads {
        match g {
            BranchOpGrads::Conv(c) => out.extend(ConvBn::grad_views(c)),
            BranchOpGrads::Fork(a, b) => {
                out.extend(ConvBn::grad_views(a));
                out.extend(ConvBn::grad_views(b));
            }
            BranchOpGrads::None => {}
        }
    }
}

/// Parallel branches whose outputs concatenate along channels.
#[derive(Debug, Clone)]
struct ConcatModule<F> {
    branches: Vec<Branch<F>>,
}

#[derive(Debug)]
struct ConcatCache<F> {
    branches: Vec<BranchCache<F>>,
    splits: Vec<usize>,
}

type ConcatGrads<F> = Vec<BranchGrads<F>>;

impl<F: Real> ConcatModule<F> {
    fn forward_eval(&self, x: &Array4<F>) -> Array4<F> {
        let outs: Vec<Array4<F>> = self.branches.iter().map(|b| b.forward_eval(x)).collect();
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        concatenate(Axis(1), &views).unwrap()
    }

    fn forward_eval_cached(&self, x: &Array4<F>, store_input: bool) -> (Array4<F>, ConcatCache<F>) {
        let mut outs = Vec::with_capacity(self.branches.len());
        let mut caches = Vec::with_capacity(self.branches.len());
        let mut splits = Vec::with_capacity(self.branches.len());
        for branch in &self.branches {
            let (y, c) = branch.forward_eval_cached(x, store_input);
            splits.push(y.dim().1);
            outs.push(y);
            caches.push(c);
        }
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        (
            concatenate(Axis(1), &views).unwrap(),
            ConcatCache { branches: caches, splits },
        )
    }

    fn forward_train(&mut self, x: &Array4<F>) -> (Array4<F>, ConcatCache<F>) {
        let mut outs = Vec::with_capacity(self.branches.len());
        let mut caches = Vec::with_capacity(self.branches.len());
        let mut splits = Vec::with_capacity(self.branches.len());
        for branch in &mut self.branches {
            let (y, c) = branch.forward_train(x);
            splits.push(y.dim().1);
            outs.push(y);
            caches.push(c);
        }
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        (
            concatenate(Axis(1), &views).unwrap(),
            ConcatCache { branches: caches, splits },
        )
    }

    fn backward(
        &self,
        cache: &ConcatCache<F>,
        gout: &Array4<F>,
        mut grads: Option<&mut ConcatGrads<F>>,
    ) -> Array4<F> {
        let mut dx: Option<Array4<F>> = None;
        let mut lo = 0;
        for (bi, branch) in self.branches.iter().enumerate() {
            let hi = lo + cache.splits[bi];
            let dslice = gout.slice(s![.., lo..hi, .., ..]).to_owned();
            let bg = grads.as_mut().map(|g| &mut g[bi]);
            let db = branch.backward(&cache.branches[bi], &dslice, bg);
            match &mut dx {
                Some(acc) => *acc += &db,
                None => dx = Some(db),
            }
            lo = hi;
        }
        dx.expect("at least one branch")
    }

    fn zero_grads(&self) -> ConcatGrads<F> {
        self.branches.iter().map(|b| b.zero_grads()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct InceptionV3<F> {
    stem: Branch<F>,
    modules: Vec<ConcatModule<F>>,
    fc: Linear<F>,
}

#[derive(Debug)]
pub struct InceptionV3Cache<F> {
    stem: BranchCache<F>,
    modules: Vec<ConcatCache<F>>,
    gap_in: (usize, usize, usize, usize),
    feat: Array2<F>,
}

#[derive(Debug, Clone)]
pub struct InceptionV3Grads<F> {
    stem: BranchGrads<F>,
    modules: Vec<ConcatGrads<F>>,
    fc: LinearGrads<F>,
}

/// Module index after which each named block ends:
/// Inception-A = modules[2], Reduction-A = [3], Inception-B = [7],
/// Reduction-B = [8], Inception-C = [10].
const BLOCK_ENDS: [usize; 5] = [2, 3, 7, 8, 10];

impl<F: Real> InceptionV3<F> {
    pub fn new(rng: &mut StdRng, spec: &ClassifierSpec) -> Self {
        let conv = |rng: &mut StdRng, ci: usize, co: usize, k: (usize, usize), s: usize, p: (usize, usize)| {
            BranchOp::Conv(ConvBn::new(rng, ci, co, k, s, p, true))
        };
        let stem = Branch {
            ops: vec![
                conv(rng, spec.input_shape.0, 32, (3, 3), 2, (0, 0)),
                conv(rng, 32, 32, (3, 3), 1, (0, 0)),
                conv(rng, 32, 64, (3, 3), 1, (1, 1)),
                BranchOp::MaxPool { kernel: 3, stride: 2, padding: 0 },
                conv(rng, 64, 80, (1, 1), 1, (0, 0)),
                conv(rng, 80, 192, (3, 3), 1, (0, 0)),
                BranchOp::MaxPool { kernel: 3, stride: 2, padding: 0 },
            ],
        };
        let mut modules = Vec::new();
        let mut c_in = 192;
        for &pf in &[32usize, 64, 64] {
            modules.push(ConcatModule {
                branches: vec![
                    Branch { ops: vec![conv(rng, c_in, 64, (1, 1), 1, (0, 0))] },
                    Branch {
                        ops: vec![
                            conv(rng, c_in, 48, (1, 1), 1, (0, 0)),
                            conv(rng, 48, 64, (5, 5), 1, (2, 2)),
                        ],
                    },
                    Branch {
                        ops: vec![
                            conv(rng, c_in, 64, (1, 1), 1, (0, 0)),
                            conv(rng, 64, 96, (3, 3), 1, (1, 1)),
                            conv(rng, 96, 96, (3, 3), 1, (1, 1)),
                        ],
                    },
                    Branch {
                        ops: vec![
                            BranchOp::AvgPool { kernel: 3, stride: 1, padding: 1 },
                            conv(rng, c_in, pf, (1, 1), 1, (0, 0)),
                        ],
                    },
                ],
            });
            c_in = 64 + 64 + 96 + pf;
        }
        modules.push(ConcatModule {
            branches: vec![
                Branch { ops: vec![conv(rng, c_in, 384, (3, 3), 2, (0, 0))] },
                Branch {
                    ops: vec![
                        conv(rng, c_in, 64, (1, 1), 1, (0, 0)),
                        conv(rng, 64, 96, (3, 3), 1, (1, 1)),
                        conv(rng, 96, 96, (3, 3), 2, (0, 0)),
                    ],
                },
                Branch { ops: vec![BranchOp::MaxPool { kernel: 3, stride: 2, padding: 0 }] },
            ],
        });
        c_in = 384 + 96 + c_in;
        for &c7 in &[128usize, 160, 160, 192] {
            modules.push(ConcatModule {
                branches: vec![
                    Branch { ops: vec![conv(rng, c_in, 192, (1, 1), 1, (0, 0))] },
                    Branch {
                        ops: vec![
                            conv(rng, c_in, c7, (1, 1), 1, (0, 0)),
                            conv(rng, c7, c7, (1, 7), 1, (0, 3)),
                            conv(rng, c7, 192, (7, 1), 1, (3, 0)),
                        ],
                    },
                    Branch {
                        ops: vec![
                            conv(rng, c_in, c7, (1, 1), 1, (0, 0)),
                            conv(rng, c7, c7, (7, 1), 1, (3, 0)),
                            conv(rng, c7, c7, (1, 7), 1, (0, 3)),
                            conv(rng, c7, c7, (7, 1), 1, (3, 0)),
                            conv(rng, c7, 192, (1, 7), 1, (0, 3)),
                        ],
                    },
                    Branch {
                        ops: vec![
                            BranchOp::AvgPool { kernel: 3, stride: 1, padding: 1 },
                            conv(rng, c_in, 192, (1, 1), 1, (0, 0)),
                        ],
                    },
                ],
            });
            c_in = 768;
        }
        modules.push(ConcatModule {
            branches: vec![
                Branch {
                    ops: vec![
                        conv(rng, c_in, 192, (1, 1), 1, (0, 0)),
                        conv(rng, 192, 320, (3, 3), 2, (0, 0)),
                    ],
                },
                Branch {
                    ops: vec![
                        conv(rng, c_in, 192, (1, 1), 1, (0, 0)),
                        conv(rng, 192, 192, (1, 7), 1, (0, 3)),
                        conv(rng, 192, 192, (7, 1), 1, (3, 0)),
                        conv(rng, 192, 192, (3, 3), 2, (0, 0)),
                    ],
                },
                Branch { ops: vec![BranchOp::MaxPool { kernel: 3, stride: 2, padding: 0 }] },
            ],
        });
        c_in = 320 + 192 + c_in;
        for _ in 0..2 {
            let fork1 = BranchOp::Fork(
                ConvBn::new(rng, 384, 384, (1, 3), 1, (0, 1), true),
                ConvBn::new(rng, 384, 384, (3, 1), 1, (1, 0), true),
            );
            let fork2 = BranchOp::Fork(
                ConvBn::new(rng, 384, 384, (1, 3), 1, (0, 1), true),
                ConvBn::new(rng, 384, 384, (3, 1), 1, (1, 0), true),
            );
            modules.push(ConcatModule {
                branches: vec![
                    Branch { ops: vec![conv(rng, c_in, 320, (1, 1), 1, (0, 0))] },
                    Branch { ops: vec![conv(rng, c_in, 384, (1, 1), 1, (0, 0)), fork1] },
                    Branch {
                        ops: vec![
                            conv(rng, c_in, 448, (1, 1), 1, (0, 0)),
                            conv(rng, 448, 384, (3, 3), 1, (1, 1)),
                            fork2,
                        ],
                    },
                    Branch {
                        ops: vec![
                            BranchOp::AvgPool { kernel: 3, stride: 1, padding: 1 },
                            conv(rng, c_in, 192, (1, 1), 1, (0, 0)),
                        ],
                    },
                ],
            });
            c_in = 2048;
        }
        let fc = Linear::new(rng, 2048, spec.num_classes);
        Self { stem, modules, fc }
    }

    fn tap_after_module(module_idx: usize) -> Option<usize> {
        BLOCK_ENDS.iter().position(|&e| e == module_idx).map(|i| i + 1)
    }

    pub fn forward_taps(&self, x: &Array4<F>, points: &[usize]) -> (Array2<F>, Vec<Array4<F>>) {
        let mut taps = Vec::with_capacity(points.len());
        let mut cur = self.stem.forward_eval(x);
        if points.contains(&0) {
            taps.push(cur.clone());
        }
        for (mi, module) in self.modules.iter().enumerate() {
            cur = module.forward_eval(&cur);
            if let Some(tp) = Self::tap_after_module(mi) {
                if points.contains(&tp) {
                    taps.push(cur.clone());
                }
            }
        }
        let feat = global_avg_pool(&cur);
        if points.contains(&6) {
            let (n, c) = feat.dim();
            taps.push(feat.clone().into_shape_with_order((n, c, 1, 1)).unwrap());
        }
        (self.fc.forward(&feat), taps)
    }

    pub fn forward_cached(
        &self,
        x: &Array4<F>,
        points: &[usize],
        store_input: bool,
    ) -> (Array2<F>, Vec<Array4<F>>, InceptionV3Cache<F>) {
        let mut taps = Vec::with_capacity(points.len());
        let (mut cur, stem_cache) = self.stem.forward_eval_cached(x, store_input);
        if points.contains(&0) {
            taps.push(cur.clone());
        }
        let mut module_caches = Vec::with_capacity(self.modules.len());
        for (mi, module) in self.modules.iter().enumerate() {
            let (y, c) = module.forward_eval_cached(&cur, store_input);
            module_caches.push(c);
            cur = y;
            if let Some(tp) = Self::tap_after_module(mi) {
                if points.contains(&tp) {
                    taps.push(cur.clone());
                }
            }
        }
        let gap_in = cur.dim();
        let feat = global_avg_pool(&cur);
        if points.contains(&6) {
            let (n, c) = feat.dim();
            taps.push(feat.clone().into_shape_with_order((n, c, 1, 1)).unwrap());
        }
        let logits = self.fc.forward(&feat);
        (
            logits,
            taps,
            InceptionV3Cache { stem: stem_cache, modules: module_caches, gap_in, feat },
        )
    }

    pub fn forward_train(&mut self, x: &Array4<F>) -> (Array2<F>, InceptionV3Cache<F>) {
        let (mut cur, stem_cache) = self.stem.forward_train(x);
        let mut module_caches = Vec::with_capacity(self.modules.len());
        for module in self.modules.iter_mut() {
            let (y, c) = module.forward_train(&cur);
            module_caches.push(c);
            cur = y;
        }
        let gap_in = cur.dim();
        let feat = global_avg_pool(&cur);
        let logits = self.fc.forward(&feat);
        (
            logits,
            InceptionV3Cache { stem: stem_cache, modules: module_caches, gap_in, feat },
        )
    }

    pub fn backward(
        &self,
        cache: &InceptionV3Cache<F>,
        dlogits: &Array2<F>,
        tap_grads: &[(usize, &Array4<F>)],
        mut grads: Option<&mut InceptionV3Grads<F>>,
    ) -> Array4<F> {
        let mut dfeat = self
            .fc
            .backward(&cache.feat, dlogits, grads.as_mut().map(|g| &mut g.fc));
        if let Some((_, g)) = tap_grads.iter().find(|(p, _)| *p == 6) {
            let (n, c, _, _) = g.dim();
            dfeat += &g.view().into_shape_with_order((n, c)).unwrap();
        }
        let mut d = global_avg_pool_backward(cache.gap_in, &dfeat);
        for mi in (0..self.modules.len()).rev() {
            if let Some(tp) = Self::tap_after_module(mi) {
                if let Some((_, g)) = tap_grads.iter().find(|(p, _)| *p == tp) {
                    d += *g;
                }
            }
            let mg = grads.as_mut().map(|g| &mut g.modules[mi]);
            d = self.modules[mi].backward(&cache.modules[mi], &d, mg);
        }
        if let Some((_, g)) = tap_grads.iter().find(|(p, _)| *p == 0) {
            d += *g;
        }
        self.stem
            .backward(&cache.stem, &d, grads.as_mut().map(|g| &mut g.stem))
    }

    pub fn zero_grads(&self) -> InceptionV3Grads<F> {
        InceptionV3Grads {
            stem: self.stem.zero_grads(),
            modules: self.modules.iter().map(|m| m.zero_grads()).collect(),
            fc: self.fc.zero_grads(),
        }
    }

    fn convs(&self) -> Vec<&ConvBn<F>> {
        let mut v = self.stem.convs();
        for m in &self.modules {
            for b in &m.branches {
                v.extend(b.convs());
            }
        }
        v
    }


    pub fn param_count(&self) -> usize {
        self.convs().iter().map(|c| c.param_count()).sum::<usize>() + self.fc.param_count()
    }

    pub fn param_views(&self) -> Vec<ArrayViewD<'_, F>> {
        let mut v = Vec::new();
        for c in self.convs() {
            v.extend(c.param_views());
        }
        v.push(self.fc.weight.view().into_dyn());
        v.push(self.fc.bias.view().into_dyn());
        v
    }

    pub fn param_views_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        let Self { stem, modules, fc } = self;
        let mut v = Vec::new();
        for c in stem.convs_mut() {
            v.extend(c.param_views_mut());
        }
        for m in modules {
            for b in &mut m.branches {
                for c in b.convs_mut() {
                    v.extend(c.param_views_mut());
                }
            }
        }
        v.push(fc.weight.view_mut().into_dyn());
        v.push(fc.bias.view_mut().into_dyn());
        v
    }

    pub fn grad_views<'a>(grads: &'a InceptionV3Grads<F>) -> Vec<ArrayViewD<'a, F>> {
        let mut v = Vec::new();
        grad_convs(&grads.stem, &mut v);
        for m in &grads.modules {
            for b in m {
                grad_convs(b, &mut v);
            }
        }
        v.push(grads.fc.weight.view().into_dyn());
        v.push(grads.fc.bias.view().into_dyn());
        v
    }

    pub fn state_views(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut v = Vec::new();
        for (i, c) in self.convs().into_iter().enumerate() {
            c.state_views(&format!("conv{i}"), &mut v);
        }
        v.push(("fc.weight".into(), self.fc.weight.view().into_dyn()));
        v.push(("fc.bias".into(), self.fc.bias.view().into_dyn()));
        v
    }

    pub fn state_views_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        let Self { stem, modules, fc } = self;
        let mut convs = stem.convs_mut();
        for m in modules {
            for b in &mut m.branches {
                convs.extend(b.convs_mut());
            }
        }
        let mut v = Vec::new();
        for (i, c) in convs.into_iter().enumerate() {
            c.state_views_mut(&format!("conv{i}"), &mut v);
        }
        v.push(("fc.weight".into(), fc.weight.view_mut().into_dyn()));
        v.push(("fc.bias".into(), fc.bias.view_mut().into_dyn()));
        v
    }

    /// Spatial-size trace used to validate input shapes at build time.
    /// Only the valid (unpadded) 3x3 stages shrink the map.
    pub fn min_input_ok(h: usize, w: usize) -> bool {
        let trace = |s0: usize| -> Option<usize> {
            let mut s = s0;
            // stem conv s2, stem conv, stem pool, stem conv, stem pool,
            // Reduction-A, Reduction-B
            for stride in [2usize, 1, 2, 1, 2, 2, 2] {
                if s < 3 {
                    return None;
                }
                s = (s - 3) / stride + 1;
            }
            Some(s)
        };
        matches!((trace(h), trace(w)), (Some(sh), Some(sw)) if sh >= 1 && sw >= 1)
    }
}
