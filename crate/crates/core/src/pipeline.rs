//! End-to-end enhancement: node-side encoding and compression, the link,
//! and fusion-center decoding with Griffin-Lim phase reconstruction.

use ndarray::Array2;
use rayon::prelude::*;

use crate::compressor::{compress_sequence, reconstruction_mse, SvdFactors};
use crate::dsp::{extract_features, griffin_lim, stft, Spectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::metrics::NsaReport;
use crate::model::{CasNet, Encoded, FeatureTensor, KeyWindows, WeightManifest, WindowMask};
use crate::transport::{simulate_link, ChannelModel, LinkStats, ReceivedSequence};

/// Griffin-Lim rounds after decoding, started from the noisy phase.
pub const DEFAULT_GLA_ITERS: usize = 1;

/// What the fusion center has from one non-reference microphone.
#[derive(Debug, Clone)]
pub enum NodeInput {
    /// Uncompressed features, every frame on time.
    Raw(FeatureTensor),
    /// Whatever survived the link.
    Received(ReceivedSequence),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transmission {
    Raw,
    Compressed { rank: usize, channel: ChannelModel },
}

impl Transmission {
    pub fn lossless(rank: usize) -> Self {
        Self::Compressed {
            rank,
            channel: ChannelModel::lossless(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Enhanced {
    pub waveform: Waveform,
    /// Estimated linear magnitude, `T x bins`.
    pub magnitude: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct EnhanceRun {
    pub enhanced: Enhanced,
    pub nsa: NsaReport,
    pub link: Option<LinkStats>,
    /// Mean per-node feature reconstruction MSE at the transmitted rank.
    pub feature_mse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Enhancer {
    net: CasNet,
    stft: StftConfig,
    gla_iters: usize,
}

impl Enhancer {
    pub fn new(net: CasNet) -> Self {
        Self {
            net,
            stft: StftConfig::default(),
            gla_iters: DEFAULT_GLA_ITERS,
        }
    }

    pub fn from_manifest(m: &WeightManifest) -> Result<Self> {
        Ok(Self::new(CasNet::from_manifest(m)?))
    }

    pub fn with_gla_iters(mut self, iters: usize) -> Self {
        self.gla_iters = iters;
        self
    }

    pub fn net(&self) -> &CasNet {
        &self.net
    }

    pub fn stft_config(&self) -> &StftConfig {
        &self.stft
    }

    fn analyze(&self, x: &Waveform) -> Result<(Spectrogram, Encoded)> {
        if x.fs != self.stft.fs {
            return Err(Error::SampleRate {
                expected: self.stft.fs,
                found: x.fs,
            });
        }
        let s = stft(x, &self.stft)?;
        let phi = extract_features(&s, self.net.config().alpha)?;
        let enc = self.net.encode(&phi)?;
        Ok((s, enc))
    }

    /// Node side: features of one microphone.
    pub fn edge_encode(&self, x: &Waveform) -> Result<FeatureTensor> {
        Ok(self.analyze(x)?.1.h)
    }

    /// Node side: rank-`rank` factors of every frame.
    pub fn edge_compress(&self, x: &Waveform, rank: usize) -> Result<Vec<SvdFactors>> {
        compress_sequence(&self.edge_encode(x)?, rank)
    }

    /// Fusion center: enhances the reference channel given the other
    /// microphones. The output has the reference length.
    pub fn enhance(&self, reference: &Waveform, nodes: &[NodeInput]) -> Result<Enhanced> {
        let (spec, enc) = self.analyze(reference)?;
        let t = enc.h.n_frames();
        let cfg = self.net.config();
        let owned = nodes
            .iter()
            .map(|n| match n {
                NodeInput::Raw(h) => Ok((h.clone(), WindowMask::full(h.n_frames(), cfg.past, cfg.future))),
                NodeInput::Received(r) => Ok((r.features()?, r.mask.clone())),
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, (h, _)) in owned.iter().enumerate() {
            if h.n_frames() != t {
                return Err(Error::Shape {
                    name: format!("node {i} frames"),
                    expected: vec![t],
                    found: vec![h.n_frames()],
                });
            }
        }
        let windows: Vec<KeyWindows> = owned
            .iter()
            .map(|(features, mask)| KeyWindows { features, mask })
            .collect();
        let compressed = self.net.forward(&enc, &windows)?;
        let inv = 1.0 / cfg.alpha;
        let magnitude = compressed.mapv(|v| v.powf(inv));
        let phase = spec.phase();
        let mut waveform = griffin_lim(magnitude.view(), phase.view(), self.gla_iters, &self.stft)?;
        waveform.samples.resize(reference.len(), 0.0);
        Ok(Enhanced {
            waveform,
            magnitude,
        })
    }

    /// Full run on a multichannel mixture; channel 0 is the reference and
    /// every other channel is a node.
    pub fn run(&self, mix: &[Waveform], mode: &Transmission) -> Result<EnhanceRun> {
        let (reference, others) = mix
            .split_first()
            .ok_or_else(|| Error::Config("at least one channel is required".into()))?;
        for (i, x) in others.iter().enumerate() {
            if x.len() != reference.len() {
                return Err(Error::Shape {
                    name: format!("channel {} length", i + 1),
                    expected: vec![reference.len()],
                    found: vec![x.len()],
                });
            }
        }
        let feats = others
            .par_iter()
            .map(|x| self.edge_encode(x))
            .collect::<Result<Vec<_>>>()?;
        let cfg = self.net.config();
        let hop = self.stft.hop;
        match mode {
            Transmission::Raw => {
                let nodes: Vec<NodeInput> = feats.into_iter().map(NodeInput::Raw).collect();
                Ok(EnhanceRun {
                    enhanced: self.enhance(reference, &nodes)?,
                    nsa: NsaReport::raw(reference.len(), hop),
                    link: None,
                    feature_mse: None,
                })
            }
            Transmission::Compressed { rank, channel } => {
                let streams = feats
                    .par_iter()
                    .map(|h| compress_sequence(h, *rank))
                    .collect::<Result<Vec<_>>>()?;
                let feature_mse = if feats.is_empty() {
                    None
                } else {
                    let total = feats
                        .iter()
                        .map(|h| reconstruction_mse(h, *rank))
                        .sum::<Result<f64>>()?;
                    Some(total / feats.len() as f64)
                };
                let (received, link) = simulate_link(&streams, channel, cfg.past, cfg.future)?;
                let nodes: Vec<NodeInput> = received.into_iter().map(NodeInput::Received).collect();
                let frames = self.stft.n_frames(reference.len());
                Ok(EnhanceRun {
                    enhanced: self.enhance(reference, &nodes)?,
                    nsa: NsaReport::compute(frames, cfg.d, cfg.f_prime, *rank, reference.len(), hop)?,
                    link: Some(link),
                    feature_mse,
                })
            }
        }
    }
}

/// One row of a rank sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub rank: usize,
    pub nsa: f64,
    pub si_sdr: f64,
    pub stoi: f64,
    pub feature_mse: f64,
}

pub const SWEEP_CSV_HEADER: &str = "rank,nsa,si_sdr,stoi,feature_mse";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.rank, self.nsa, self.si_sdr, self.stoi, self.feature_mse
        )
    }
}

/// Runs the lossless compressed pipeline once per rank in parallel; rows
/// come back in the order of `ranks`.
pub fn sweep_rank(
    enhancer: &Enhancer,
    mix: &[Waveform],
    target: &Waveform,
    ranks: &[usize],
) -> Result<Vec<SweepRow>> {
    ranks
        .par_iter()
        .map(|&rank| {
            let run = enhancer.run(mix, &Transmission::lossless(rank))?;
            let est = &run.enhanced.waveform;
            Ok(SweepRow {
                rank,
                nsa: run.nsa.nsa,
                si_sdr: crate::metrics::si_sdr(&est.samples, &target.samples)?,
                stoi: crate::metrics::stoi(&est.samples, &target.samples, target.fs)?,
                feature_mse: run.feature_mse.unwrap_or(0.0),
            })
        })
        .collect()
}
