//! The MEME network container: one encoder and one decoder head per
//! modality plus a pseudo-input bank per modality. Weight sharing is
//! structural — the conditional prior p(z|t) *is* the t-encoder and the
//! likelihood q(t|z) *is* the t-decoder, so exactly four networks exist.

use ndarray::{Array1, Array2, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::distributions::DiagGaussian;
use crate::error::MemeError;
use crate::tape::{softplus_stable, NodeId, Tape};

pub const SCALE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LikelihoodKind {
    Laplace,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub payload_shape: Vec<usize>,
    pub likelihood_kind: LikelihoodKind,
}

impl ModalitySpec {
    pub fn new(
        name: impl Into<String>,
        payload_shape: Vec<usize>,
        likelihood_kind: LikelihoodKind,
    ) -> Result<Self, MemeError> {
        if payload_shape.is_empty() {
            return Err(MemeError::Config("payload_shape must be nonempty".into()));
        }
        Ok(Self {
            name: name.into(),
            payload_shape,
            likelihood_kind,
        })
    }

    pub fn payload_dim(&self) -> usize {
        self.payload_shape.iter().product()
    }
}

/// Which of the two modalities an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModalityId {
    S,
    T,
}

impl ModalityId {
    pub fn other(self) -> Self {
        match self {
            ModalityId::S => ModalityId::T,
            ModalityId::T => ModalityId::S,
        }
    }
}

/// Parameter groups. The first four are the networks, the last two the
/// pseudo-input banks; there is deliberately no slot for anything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    EncS,
    EncT,
    DecS,
    DecT,
    BankS,
    BankT,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::EncS,
        Component::EncT,
        Component::DecS,
        Component::DecT,
        Component::BankS,
        Component::BankT,
    ];

    pub fn is_network(self) -> bool {
        !matches!(self, Component::BankS | Component::BankT)
    }
}

/// Fully connected head with tanh hidden activations and a linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Mlp {
    pub fn init(sizes: &[usize], rng: &mut ChaCha20Rng) -> Self {
        assert!(sizes.len() >= 2);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let sd = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                let e: f64 = StandardNormal.sample(rng);
                e * sd
            });
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn forward_plain(&self, x: &Array1<f64>) -> Array1<f64> {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(self.biases.iter()).enumerate() {
            h = w.dot(&h) + b;
            if i != last {
                h.mapv_inplace(f64::tanh);
            }
        }
        h
    }

    /// Forward pass on a tape. `param_ids` alternates weight, bias per layer
    /// in the order produced by [`MemeModel::bind`].
    pub fn forward_tape(&self, tape: &mut Tape, param_ids: &[NodeId], input: NodeId) -> NodeId {
        let mut h = input;
        let last = self.weights.len() - 1;
        for i in 0..self.weights.len() {
            let w = param_ids[2 * i];
            let b = param_ids[2 * i + 1];
            let lin = tape.matvec(w, h);
            h = tape.add(lin, b);
            if i != last {
                h = tape.tanh(h);
            }
        }
        h
    }

    fn param_arrays(&self) -> Vec<ArrayD<f64>> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(self.biases.iter()) {
            out.push(w.clone().into_dyn());
            out.push(b.clone().into_dyn());
        }
        out
    }

    fn for_each_param_mut(&mut self, f: &mut impl FnMut(&mut [f64])) {
        for i in 0..self.weights.len() {
            f(self.weights[i].as_slice_mut().unwrap());
            f(self.biases[i].as_slice_mut().unwrap());
        }
    }
}

/// Learnable pseudo-inputs for one modality's payload space.
#[derive(Debug, Clone)]
pub struct PseudoBank {
    pub points: Vec<Array1<f64>>,
}

impl PseudoBank {
    pub fn size(&self) -> usize {
        self.points.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub n_pseudo: usize,
    pub laplace_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            hidden: vec![64],
            n_pseudo: 50,
            laplace_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MemeModel {
    pub spec_s: ModalitySpec,
    pub spec_t: ModalitySpec,
    pub latent_dim: usize,
    pub enc_s: Mlp,
    pub enc_t: Mlp,
    pub dec_s: Mlp,
    pub dec_t: Mlp,
    pub bank_s: PseudoBank,
    pub bank_t: PseudoBank,
    pub laplace_scale: f64,
    pub config: ModelConfig,
}

impl MemeModel {
    pub fn new(
        spec_s: ModalitySpec,
        spec_t: ModalitySpec,
        config: ModelConfig,
    ) -> Result<Self, MemeError> {
        if config.latent_dim == 0 {
            return Err(MemeError::Config("latent_dim must be positive".into()));
        }
        if config.n_pseudo == 0 {
            return Err(MemeError::Config("n_pseudo must be positive".into()));
        }
        if spec_s.name == spec_t.name {
            return Err(MemeError::Config("modality names must be unique".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let l = config.latent_dim;
        let enc_sizes = |d_in: usize| {
            let mut v = vec![d_in];
            v.extend_from_slice(&config.hidden);
            v.push(2 * l);
            v
        };
        let dec_sizes = |d_out: usize| {
            let mut v = vec![l];
            v.extend_from_slice(&config.hidden);
            v.push(d_out);
            v
        };
        let enc_s = Mlp::init(&enc_sizes(spec_s.payload_dim()), &mut rng);
        let enc_t = Mlp::init(&enc_sizes(spec_t.payload_dim()), &mut rng);
        let dec_s = Mlp::init(&dec_sizes(spec_s.payload_dim()), &mut rng);
        let dec_t = Mlp::init(&dec_sizes(spec_t.payload_dim()), &mut rng);
        let bank = |dim: usize, rng: &mut ChaCha20Rng| PseudoBank {
            points: (0..config.n_pseudo)
                .map(|_| {
                    Array1::from_shape_fn(dim, |_| {
                        let e: f64 = StandardNormal.sample(rng);
                        0.01 * e
                    })
                })
                .collect(),
        };
        let bank_s = bank(spec_s.payload_dim(), &mut rng);
        let bank_t = bank(spec_t.payload_dim(), &mut rng);
        Ok(Self {
            latent_dim: l,
            laplace_scale: config.laplace_scale,
            spec_s,
            spec_t,
            enc_s,
            enc_t,
            dec_s,
            dec_t,
            bank_s,
            bank_t,
            config,
        })
    }

    /// The same model with the roles of the two modalities exchanged.
    pub fn swapped(&self) -> Self {
        let mut m = self.clone();
        std::mem::swap(&mut m.spec_s, &mut m.spec_t);
        std::mem::swap(&mut m.enc_s, &mut m.enc_t);
        std::mem::swap(&mut m.dec_s, &mut m.dec_t);
        std::mem::swap(&mut m.bank_s, &mut m.bank_t);
        m
    }

    /// VampPrior-style bank initialization: copy payloads from the training
    /// corpus of each modality, chosen by the given seed.
    pub fn init_banks_from(
        &mut self,
        s_payloads: &[Array1<f64>],
        t_payloads: &[Array1<f64>],
        seed: u64,
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pick = |items: &[Array1<f64>], n: usize, rng: &mut ChaCha20Rng| -> Vec<Array1<f64>> {
            (0..n)
                .map(|_| items[rng.gen_range(0..items.len())].clone())
                .collect()
        };
        if !s_payloads.is_empty() {
            self.bank_s.points = pick(s_payloads, self.bank_s.size(), &mut rng);
        }
        if !t_payloads.is_empty() {
            self.bank_t.points = pick(t_payloads, self.bank_t.size(), &mut rng);
        }
    }

    pub fn spec(&self, id: ModalityId) -> &ModalitySpec {
        match id {
            ModalityId::S => &self.spec_s,
            ModalityId::T => &self.spec_t,
        }
    }

    pub fn encoder(&self, id: ModalityId) -> &Mlp {
        match id {
            ModalityId::S => &self.enc_s,
            ModalityId::T => &self.enc_t,
        }
    }

    pub fn decoder(&self, id: ModalityId) -> &Mlp {
        match id {
            ModalityId::S => &self.dec_s,
            ModalityId::T => &self.dec_t,
        }
    }

    pub fn bank(&self, id: ModalityId) -> &PseudoBank {
        match id {
            ModalityId::S => &self.bank_s,
            ModalityId::T => &self.bank_t,
        }
    }

    /// Encoding distribution q(z|payload) for the given modality. The same
    /// call realises the conditional prior p(z|t) when used from the other
    /// direction.
    pub fn encode(&self, id: ModalityId, payload: &Array1<f64>) -> Result<DiagGaussian, MemeError> {
        let spec = self.spec(id);
        if payload.len() != spec.payload_dim() {
            return Err(MemeError::shape(format!(
                "payload len {} != {} for modality {}",
                payload.len(),
                spec.payload_dim(),
                spec.name
            )));
        }
        let raw = self.encoder(id).forward_plain(payload);
        let l = self.latent_dim;
        let mean = raw.slice(ndarray::s![0..l]).to_owned();
        let scale = raw
            .slice(ndarray::s![l..2 * l])
            .mapv(|x| softplus_stable(x) + SCALE_FLOOR);
        DiagGaussian::new(mean, scale)
    }

    /// Wrap a decoder's raw output in the modality's configured likelihood.
    pub fn likelihood_from_output(
        &self,
        id: ModalityId,
        out: Array1<f64>,
    ) -> Result<crate::distributions::Likelihood, MemeError> {
        match self.spec(id).likelihood_kind {
            LikelihoodKind::Laplace => Ok(crate::distributions::Likelihood::Laplace(
                crate::distributions::LaplaceLikelihood::new(out, self.laplace_scale)?,
            )),
            LikelihoodKind::Categorical => Ok(crate::distributions::Likelihood::Categorical(
                crate::distributions::CategoricalLikelihood::new(out)?,
            )),
        }
    }

    /// Mixture prior over latents built from the modality's pseudo bank:
    /// log (1/N) Σᵢ p(z | uᵢ).
    pub fn pseudo_prior_log_prob(
        &self,
        id: ModalityId,
        z: &Array1<f64>,
    ) -> Result<f64, MemeError> {
        if z.len() != self.latent_dim {
            return Err(MemeError::shape("latent dim mismatch"));
        }
        let bank = self.bank(id);
        if bank.size() == 0 {
            return Err(MemeError::Config("pseudo bank is empty".into()));
        }
        let mut terms = Vec::with_capacity(bank.size());
        for u in &bank.points {
            let d = self.encode(id, u)?;
            terms.push(crate::distributions::gauss_log_prob(&d, z)?);
        }
        Ok(crate::tape::logsumexp_slice(&terms) - (bank.size() as f64).ln())
    }

    pub fn component_params(&self, c: Component) -> Vec<ArrayD<f64>> {
        match c {
            Component::EncS => self.enc_s.param_arrays(),
            Component::EncT => self.enc_t.param_arrays(),
            Component::DecS => self.dec_s.param_arrays(),
            Component::DecT => self.dec_t.param_arrays(),
            Component::BankS => self
                .bank_s
                .points
                .iter()
                .map(|p| p.clone().into_dyn())
                .collect(),
            Component::BankT => self
                .bank_t
                .points
                .iter()
                .map(|p| p.clone().into_dyn())
                .collect(),
        }
    }

    /// Visit each parameter array of a component as a flat mutable slice,
    /// in the same order as [`component_params`](Self::component_params).
    pub fn for_each_param_mut(&mut self, c: Component, mut f: impl FnMut(&mut [f64])) {
        match c {
            Component::EncS => self.enc_s.for_each_param_mut(&mut f),
            Component::EncT => self.enc_t.for_each_param_mut(&mut f),
            Component::DecS => self.dec_s.for_each_param_mut(&mut f),
            Component::DecT => self.dec_t.for_each_param_mut(&mut f),
            Component::BankS => {
                for p in &mut self.bank_s.points {
                    f(p.as_slice_mut().unwrap());
                }
            }
            Component::BankT => {
                for p in &mut self.bank_t.points {
                    f(p.as_slice_mut().unwrap());
                }
            }
        }
    }

    pub fn total_param_count(&self) -> usize {
        Component::ALL
            .iter()
            .map(|&c| {
                self.component_params(c)
                    .iter()
                    .map(|a| a.len())
                    .sum::<usize>()
            })
            .sum()
    }

    /// Bind every parameter as a tape leaf. Returns the node ids grouped by
    /// component in `component_params` order.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let mut bind_c = |c: Component| -> Vec<NodeId> {
            self.component_params(c)
                .into_iter()
                .map(|a| tape.leaf(a))
                .collect()
        };
        BoundModel {
            enc_s: bind_c(Component::EncS),
            enc_t: bind_c(Component::EncT),
            dec_s: bind_c(Component::DecS),
            dec_t: bind_c(Component::DecT),
            bank_s: bind_c(Component::BankS),
            bank_t: bind_c(Component::BankT),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), MemeError> {
        let manifest = CheckpointManifest {
            spec_s: self.spec_s.clone(),
            spec_t: self.spec_t.clone(),
            config: self.config.clone(),
        };
        let mjson = serde_json::to_vec(&manifest)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&(mjson.len() as u64).to_le_bytes())?;
        f.write_all(&mjson)?;
        for &c in &Component::ALL {
            for arr in self.component_params(c) {
                for &v in arr.as_slice().unwrap() {
                    f.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MemeError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 9];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(MemeError::Data("not a checkpoint file".into()));
        }
        let mut lenb = [0u8; 8];
        f.read_exact(&mut lenb)?;
        let mlen = u64::from_le_bytes(lenb) as usize;
        let mut mjson = vec![0u8; mlen];
        f.read_exact(&mut mjson)?;
        let manifest: CheckpointManifest = serde_json::from_slice(&mjson)?;
        let mut model = MemeModel::new(manifest.spec_s, manifest.spec_t, manifest.config)?;
        for &c in &Component::ALL {
            model.for_each_param_mut(c, |slice| {
                for v in slice.iter_mut() {
                    let mut b = [0u8; 8];
                    // propagate by panicking here; length mismatches mean a corrupt file
                    f.read_exact(&mut b).expect("checkpoint truncated");
                    *v = f64::from_le_bytes(b);
                }
            });
        }
        Ok(model)
    }
}

const MAGIC: &[u8; 9] = b"MEMECKPT1";

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    spec_s: ModalitySpec,
    spec_t: ModalitySpec,
    config: ModelConfig,
}

/// Tape node ids for every bound parameter of a [`MemeModel`].
pub struct BoundModel {
    pub enc_s: Vec<NodeId>,
    pub enc_t: Vec<NodeId>,
    pub dec_s: Vec<NodeId>,
    pub dec_t: Vec<NodeId>,
    pub bank_s: Vec<NodeId>,
    pub bank_t: Vec<NodeId>,
}

impl BoundModel {
    pub fn component(&self, c: Component) -> &[NodeId] {
        match c {
            Component::EncS => &self.enc_s,
            Component::EncT => &self.enc_t,
            Component::DecS => &self.dec_s,
            Component::DecT => &self.dec_t,
            Component::BankS => &self.bank_s,
            Component::BankT => &self.bank_t,
        }
    }

    pub fn encoder_ids(&self, id: ModalityId) -> &[NodeId] {
        match id {
            ModalityId::S => &self.enc_s,
            ModalityId::T => &self.enc_t,
        }
    }

    pub fn decoder_ids(&self, id: ModalityId) -> &[NodeId] {
        match id {
            ModalityId::S => &self.dec_s,
            ModalityId::T => &self.dec_t,
        }
    }

    pub fn bank_ids(&self, id: ModalityId) -> &[NodeId] {
        match id {
            ModalityId::S => &self.bank_s,
            ModalityId::T => &self.bank_t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy_model() -> MemeModel {
        let spec_s = ModalitySpec::new("s", vec![3], LikelihoodKind::Laplace).unwrap();
        let spec_t = ModalitySpec::new("t", vec![3], LikelihoodKind::Laplace).unwrap();
        MemeModel::new(
            spec_s,
            spec_t,
            ModelConfig {
                latent_dim: 2,
                hidden: vec![4],
                n_pseudo: 8,
                laplace_scale: 0.1,
                seed: 42,
            },
        )
        .unwrap()
    }

    #[test]
    fn encode_is_deterministic() {
        let m = toy_model();
        let x = array![0.1, -0.4, 0.9];
        let a = m.encode(ModalityId::S, &x).unwrap();
        let b = m.encode(ModalityId::S, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weight_encoder_gives_zero_mean_and_activation_scale() {
        let mut m = toy_model();
        m.for_each_param_mut(Component::EncS, |s| s.fill(0.0));
        let d = m.encode(ModalityId::S, &array![1.0, 2.0, 3.0]).unwrap();
        assert!(d.mean.iter().all(|&v| v == 0.0));
        let expect = softplus_stable(0.0) + SCALE_FLOOR;
        assert!(d.scale.iter().all(|&v| (v - expect).abs() < 1e-15));
    }

    #[test]
    fn encode_rejects_wrong_shape() {
        let m = toy_model();
        assert!(m.encode(ModalityId::S, &array![1.0]).is_err());
    }

    #[test]
    fn encode_mean_jacobian_matches_finite_differences() {
        // autodiff via tape vs central differences on one weight entry
        let m = toy_model();
        let x = array![0.3, -0.2, 0.8];
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let input = tape.leaf(x.clone().into_dyn());
        let raw = m.enc_s.forward_tape(&mut tape, &bound.enc_s, input);
        let mu = tape.slice(raw, 0, m.latent_dim);
        let mu0 = tape.slice(mu, 0, 1);
        let root = tape.sum(mu0);
        let grads = tape.backward(root);
        let gw = grads[bound.enc_s[0]].as_ref().unwrap().clone();

        let h = 1e-6;
        for probe in [0usize, 3, 7] {
            let eval = |delta: f64| {
                let mut mm = m.clone();
                let mut idx = 0;
                mm.for_each_param_mut(Component::EncS, |s| {
                    if idx == 0 {
                        s[probe] += delta;
                    }
                    idx += 1;
                });
                mm.encode(ModalityId::S, &x).unwrap().mean[0]
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let ad = gw.as_slice().unwrap()[probe];
            let denom = fd.abs().max(1e-8);
            assert!(
                ((fd - ad) / denom).abs() < 1e-4,
                "probe={probe} fd={fd} ad={ad}"
            );
        }
    }

    #[test]
    fn pseudo_prior_single_component_reduces_to_encoder() {
        let spec_s = ModalitySpec::new("s", vec![3], LikelihoodKind::Laplace).unwrap();
        let spec_t = ModalitySpec::new("t", vec![3], LikelihoodKind::Laplace).unwrap();
        let m = MemeModel::new(
            spec_s,
            spec_t,
            ModelConfig {
                latent_dim: 2,
                hidden: vec![4],
                n_pseudo: 1,
                laplace_scale: 0.1,
                seed: 3,
            },
        )
        .unwrap();
        let z = array![0.2, -0.5];
        let got = m.pseudo_prior_log_prob(ModalityId::T, &z).unwrap();
        let d = m.encode(ModalityId::T, &m.bank_t.points[0]).unwrap();
        let expect = crate::distributions::gauss_log_prob(&d, &z).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn pseudo_prior_matches_direct_sum_oracle() {
        let m = toy_model();
        let z = array![0.4, 0.1];
        let got = m.pseudo_prior_log_prob(ModalityId::T, &z).unwrap();
        // naive sum-then-log
        let n = m.bank_t.size() as f64;
        let direct: f64 = m
            .bank_t
            .points
            .iter()
            .map(|u| {
                let d = m.encode(ModalityId::T, u).unwrap();
                crate::distributions::gauss_log_prob(&d, &z).unwrap().exp()
            })
            .sum::<f64>()
            / n;
        assert!((got - direct.ln()).abs() < 1e-9);
    }

    #[test]
    fn pseudo_prior_invariant_to_bank_permutation() {
        let mut m = toy_model();
        let z = array![0.4, 0.1];
        let a = m.pseudo_prior_log_prob(ModalityId::T, &z).unwrap();
        m.bank_t.points.reverse();
        let b = m.pseudo_prior_log_prob(ModalityId::T, &z).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn parameter_census_is_four_heads_two_banks() {
        let m = toy_model();
        let heads = Component::ALL.iter().filter(|c| c.is_network()).count();
        let banks = Component::ALL.iter().filter(|c| !c.is_network()).count();
        assert_eq!(heads, 4);
        assert_eq!(banks, 2);
        // every parameter in the model is reachable through the six groups
        let by_groups = m.total_param_count();
        let direct: usize = [&m.enc_s, &m.enc_t, &m.dec_s, &m.dec_t]
            .iter()
            .map(|mlp| {
                mlp.weights.iter().map(|w| w.len()).sum::<usize>()
                    + mlp.biases.iter().map(|b| b.len()).sum::<usize>()
            })
            .sum::<usize>()
            + m.bank_s.points.iter().map(|p| p.len()).sum::<usize>()
            + m.bank_t.points.iter().map(|p| p.len()).sum::<usize>();
        assert_eq!(by_groups, direct);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = toy_model();
        m.save(&path).unwrap();
        let l = MemeModel::load(&path).unwrap();
        for &c in &Component::ALL {
            let a = m.component_params(c);
            let b = l.component_params(c);
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(
                    x.as_slice().unwrap(),
                    y.as_slice().unwrap(),
                    "component {c:?} differs"
                );
            }
        }
        assert_eq!(m.spec_s, l.spec_s);
        assert_eq!(m.config, l.config);
    }
}
