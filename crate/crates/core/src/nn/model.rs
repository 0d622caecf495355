use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::layers::{DecoderBlock, EdgeConv, GeometryAwareBlock, LayerNorm, Mlp};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{vec3, Point3, PointCloud};
use crate::index::{fps_indices, knn_graph, SpatialIndex};

/// Rebuild offsets are scaled so that freshly initialized folds start close
/// to their coarse center.
const OFFSET_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_depth: usize,
    pub decoder_depth: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    /// Neighbors in the point feature extractor and token grouping.
    pub knn_feature: usize,
    /// Neighbors in the local branch of the attention blocks.
    pub knn_geom: usize,
    pub n_input: usize,
    /// Token centers chosen by farthest point sampling.
    pub n_tokens: usize,
    pub n_coarse: usize,
    pub fold_factor: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    pub fn full() -> Self {
        Self {
            encoder_depth: 6,
            decoder_depth: 8,
            num_heads: 6,
            hidden_dim: 384,
            knn_feature: 6,
            knn_geom: 8,
            n_input: 2048,
            n_tokens: 128,
            n_coarse: 256,
            fold_factor: 16,
        }
    }

    /// Reduced widths and depths for tests and laptops.
    pub fn desk() -> Self {
        Self {
            encoder_depth: 2,
            decoder_depth: 2,
            num_heads: 4,
            hidden_dim: 32,
            knn_feature: 6,
            knn_geom: 8,
            n_input: 128,
            n_tokens: 32,
            n_coarse: 32,
            fold_factor: 4,
        }
    }

    pub fn n_output(&self) -> usize {
        self.n_coarse * self.fold_factor
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_heads == 0 || self.hidden_dim == 0 || !self.hidden_dim.is_multiple_of(self.num_heads) {
            return fail(format!(
                "hidden_dim {} must be a positive multiple of num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.hidden_dim < 2 {
            return fail("hidden_dim must be at least 2".into());
        }
        if self.n_input == 0 || self.n_coarse == 0 || self.fold_factor == 0 || self.n_tokens == 0 {
            return fail("point counts must be positive".into());
        }
        if self.n_tokens > self.n_input {
            return fail(format!("n_tokens {} exceeds n_input {}", self.n_tokens, self.n_input));
        }
        if self.knn_feature == 0 || self.knn_feature >= self.n_input {
            return fail(format!("knn_feature {} must be in 1..n_input", self.knn_feature));
        }
        if self.knn_geom == 0 || self.knn_geom >= self.n_tokens || self.knn_geom >= self.n_coarse {
            return fail(format!(
                "knn_geom {} must be below n_tokens and n_coarse",
                self.knn_geom
            ));
        }
        Ok(())
    }
}

/// Centering and isotropic scaling applied to a partial cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub center: Point3,
    /// Bounding-box diagonal (1 for degenerate clouds).
    pub scale: f64,
}

impl Normalization {
    pub fn fit(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("cannot normalize an empty cloud".into()));
        }
        let mut c = [0.0; 3];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                c[a] += p[a];
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let n = points.len() as f64;
        let center = [c[0] / n, c[1] / n, c[2] / n];
        let diag = vec3::dist(lo, hi);
        let scale = if diag > 0.0 && diag.is_finite() { diag } else { 1.0 };
        Ok(Self { center, scale })
    }

    pub fn apply(&self, points: &[Point3]) -> Vec<Point3> {
        points
            .iter()
            .map(|p| vec3::scale(vec3::sub(*p, self.center), 1.0 / self.scale))
            .collect()
    }

    pub fn invert(&self, points: &[Point3]) -> Vec<Point3> {
        points
            .iter()
            .map(|p| vec3::add(vec3::scale(*p, self.scale), self.center))
            .collect()
    }
}

/// Graph handles produced by one forward pass (normalized coordinates).
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub coarse: Var,
    pub fine: Var,
    pub memory: Var,
    pub global: Var,
}

/// Point completion network: EdgeConv features, FPS tokens, geometry-aware
/// encoder, adaptive queries, decoder and folding rebuild head.
#[derive(Debug, Clone)]
pub struct CompletionModel {
    config: ModelConfig,
    seed: u64,
    params: ParamStore,
    ec1: EdgeConv,
    ec2: EdgeConv,
    pos: Mlp,
    encoder: Vec<GeometryAwareBlock>,
    enc_norm: LayerNorm,
    coarse_head: Mlp,
    query_mlp: Mlp,
    decoder: Vec<DecoderBlock>,
    dec_norm: LayerNorm,
    rebuild: Mlp,
}

impl CompletionModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let d = config.hidden_dim;
        let h = config.num_heads;
        let c1 = (d / 2).max(1);
        let ec1 = EdgeConv::new(&mut s, &mut rng, "feat.ec1", 3, c1);
        let ec2 = EdgeConv::new(&mut s, &mut rng, "feat.ec2", c1, d);
        let pos = Mlp::new(&mut s, &mut rng, "pos", [3, d, d]);
        let encoder = (0..config.encoder_depth)
            .map(|i| GeometryAwareBlock::new(&mut s, &mut rng, &format!("enc.{i}"), d, h))
            .collect::<Result<Vec<_>>>()?;
        let enc_norm = LayerNorm::new(&mut s, "enc.norm", d);
        let coarse_head = Mlp::new(&mut s, &mut rng, "query.coarse", [d, d, 3 * config.n_coarse]);
        let query_mlp = Mlp::new(&mut s, &mut rng, "query.feat", [d + 3, d, d]);
        let decoder = (0..config.decoder_depth)
            .map(|i| DecoderBlock::new(&mut s, &mut rng, &format!("dec.{i}"), d, h))
            .collect::<Result<Vec<_>>>()?;
        let dec_norm = LayerNorm::new(&mut s, "dec.norm", d);
        let rebuild = Mlp::new(&mut s, &mut rng, "rebuild", [d + 3, d, 3 * config.fold_factor]);
        Ok(Self {
            config,
            seed,
            params: s,
            ec1,
            ec2,
            pos,
            encoder,
            enc_norm,
            coarse_head,
            query_mlp,
            decoder,
            dec_norm,
            rebuild,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Binds this model's parameters as variables of `g`.
    pub fn bind(&self, g: &mut Graph) {
        g.bind_params(self.params.tensors());
    }

    /// Features, tokens and encoder. Returns `(memory, global feature)`.
    pub fn encode(&self, g: &mut Graph, points: &[Point3]) -> Result<(Var, Var)> {
        let cfg = &self.config;
        if points.len() != cfg.n_input {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} input points, got {}",
                cfg.n_input,
                points.len()
            )));
        }
        let x = g.constant(Tensor::from_points(points));
        let nbr = knn_graph(points, cfg.knn_feature)?;
        let f1 = self.ec1.forward_with_graph(g, x, &nbr, cfg.knn_feature)?;
        let f2 = self.ec2.forward_with_graph(g, f1, &nbr, cfg.knn_feature)?;

        let centers = fps_indices(points, cfg.n_tokens, 0)?;
        let index = SpatialIndex::build(points);
        let mut groups = Vec::with_capacity(cfg.n_tokens * cfg.knn_feature);
        for &c in &centers {
            groups.extend(index.knn(points[c], cfg.knn_feature)?.iter().map(|nb| nb.index));
        }
        let grouped = g.gather_rows(f2, &groups)?;
        let tokens = g.group_max(grouped, cfg.knn_feature)?;
        let coords: Vec<Point3> = centers.iter().map(|&c| points[c]).collect();
        let cvar = g.constant(Tensor::from_points(&coords));
        let pe = self.pos.forward(g, cvar)?;
        let mut t = g.add(tokens, pe)?;

        let tok_nbr = knn_graph(&coords, cfg.knn_geom)?;
        for block in &self.encoder {
            t = block.forward_with_graph(g, t, &tok_nbr, cfg.knn_geom)?;
        }
        let t = self.enc_norm.forward(g, t)?;
        let global = g.max_rows(t)?;
        Ok((t, global))
    }

    /// Coarse proposal centers and their query features from the pooled
    /// encoder feature.
    pub fn adaptive_queries(&self, g: &mut Graph, global: Var) -> Result<(Var, Var)> {
        let m = self.config.n_coarse;
        let raw = self.coarse_head.forward(g, global)?;
        let coarse = g.reshape(raw, m, 3)?;
        let rep = g.gather_rows(global, &vec![0; m])?;
        let inp = g.concat_cols(&[rep, coarse])?;
        let q = self.query_mlp.forward(g, inp)?;
        Ok((coarse, q))
    }

    /// Full forward pass on already normalized points.
    pub fn forward(&self, g: &mut Graph, points: &[Point3]) -> Result<ForwardOutput> {
        let cfg = &self.config;
        let (memory, global) = self.encode(g, points)?;
        let (coarse, mut q) = self.adaptive_queries(g, global)?;
        let coarse_pts = g.value(coarse).to_points();
        let q_nbr = knn_graph(&coarse_pts, cfg.knn_geom)?;
        for block in &self.decoder {
            q = block.forward(g, q, &q_nbr, cfg.knn_geom, memory)?;
        }
        let q = self.dec_norm.forward(g, q)?;
        let inp = g.concat_cols(&[q, coarse])?;
        let raw = self.rebuild.forward(g, inp)?;
        let offsets = g.reshape(raw, cfg.n_output(), 3)?;
        let offsets = g.scale(offsets, OFFSET_SCALE);
        let rep: Vec<usize> = (0..cfg.n_output()).map(|i| i / cfg.fold_factor).collect();
        let base = g.gather_rows(coarse, &rep)?;
        let fine = g.add(base, offsets)?;
        Ok(ForwardOutput {
            coarse,
            fine,
            memory,
            global,
        })
    }

    /// Completes a partial cloud of exactly `n_input` points. The output
    /// has `n_output` points in the input's coordinate frame.
    pub fn complete(&self, partial: &PointCloud) -> Result<PointCloud> {
        let norm = Normalization::fit(&partial.points)?;
        let mut g = Graph::new();
        self.bind(&mut g);
        let out = self.forward(&mut g, &norm.apply(&partial.points))?;
        let fine = g.value(out.fine);
        if !fine.all_finite() {
            return Err(Error::InvalidInput("completion produced non-finite coordinates".into()));
        }
        Ok(PointCloud::new(norm.invert(&fine.to_points())))
    }
}
