//! Volumetric skeleton refinement: a global U-Net on the coarse grid guides a local
//! U-Net that super-resolves overlapping windows, which are averaged into `V`.

use rand_chacha::ChaCha8Rng;
use skelforge_core::autodiff::{ConvGeometry, Tape, Var};
use skelforge_core::geometry::VoxelGrid;
use skelforge_core::nn::{Conv, Dense, Init, ParamStore};
use skelforge_core::{Error, Result, Tensor};

use crate::point2voxel::{grid_to_tensor, P2VConfig};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefinementConfig {
    /// Output resolution `r`.
    pub res: usize,
    pub global_down: [usize; 4],
    pub global_up: [usize; 4],
    pub local_down: [usize; 4],
    pub local_up: [usize; 5],
    /// Channels of the image feature volume.
    pub feature_channels: usize,
    pub code_dim: usize,
    pub p2v: P2VConfig,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            res: 64,
            global_down: [32, 64, 128, 128],
            global_up: [128, 64, 32, 2],
            local_down: [32, 64, 128, 128],
            local_up: [128, 64, 32, 16, 2],
            feature_channels: 8,
            code_dim: 512,
            p2v: P2VConfig::default(),
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.res < 16 || self.res % 8 != 0 {
            return Err(Error::Invalid(format!("refinement resolution {} must be a multiple of 8, at least 16", self.res)));
        }
        if self.global_up[3] != 2 || self.local_up[4] != 2 {
            return Err(Error::Invalid("both refinement streams must end in 2 channels".into()));
        }
        let chans = self.global_down.iter().chain(&self.global_up).chain(&self.local_down).chain(&self.local_up);
        if chans.chain([&self.feature_channels, &self.code_dim]).any(|&c| c == 0) {
            return Err(Error::Invalid("refinement channel counts must be positive".into()));
        }
        if self.window_in() > self.input_res() {
            return Err(Error::Invalid("refinement window exceeds the input grid".into()));
        }
        self.p2v.validate()
    }

    /// `r' = r / 2`, the resolution of `U_in`.
    pub fn input_res(&self) -> usize {
        self.res / 2
    }

    /// `r' / 2`, the resolution of the global stream.
    pub fn coarse_res(&self) -> usize {
        self.res / 4
    }

    /// `s' = r' / 4 + 4`
    pub fn window_in(&self) -> usize {
        self.input_res() / 4 + 4
    }

    /// `s = 2 s'`
    pub fn window_out(&self) -> usize {
        2 * self.window_in()
    }

    pub fn stride(&self) -> usize {
        self.input_res() / 4
    }

    /// Edge of the image feature volume, `r' / 4`.
    pub fn feature_res(&self) -> usize {
        self.input_res() / 4
    }
}

/// Overlapping windows on `U_in` and their doubled counterparts on `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubvolumeTiling {
    /// Input window offsets `(z, y, x)` on the `r'` grid.
    pub offsets: Vec<[usize; 3]>,
    pub window_in: usize,
    pub window_out: usize,
    pub input_res: usize,
    /// Number of output windows covering each voxel of `V` (z-major).
    pub coverage: Vec<u32>,
}

impl SubvolumeTiling {
    pub fn output_offsets(&self) -> Vec<[usize; 3]> {
        self.offsets.iter().map(|o| o.map(|v| 2 * v)).collect()
    }

    /// Offsets of the guidance windows on the coarse grid.
    pub fn coarse_offsets(&self) -> Vec<[isize; 3]> {
        self.offsets.iter().map(|o| o.map(|v| (v / 2) as isize)).collect()
    }
}

/// Window starts along one axis: multiples of `stride` and a last window clamped flush
/// with the grid end.
pub fn axis_positions(len: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 0;
    loop {
        if p + window >= len {
            let last = len - window;
            if out.last() != Some(&last) {
                out.push(last);
            }
            return out;
        }
        out.push(p);
        p += stride;
    }
}

pub fn plan_tiling(cfg: &RefinementConfig) -> Result<SubvolumeTiling> {
    cfg.validate()?;
    let (rin, s_in) = (cfg.input_res(), cfg.window_in());
    let pos = axis_positions(rin, s_in, cfg.stride());
    let mut offsets = Vec::with_capacity(pos.len().pow(3));
    for &z in &pos {
        for &y in &pos {
            for &x in &pos {
                offsets.push([z, y, x]);
            }
        }
    }
    let r = cfg.res;
    let s = cfg.window_out();
    let mut axis_cov = vec![0u32; r];
    for &p in &pos {
        for c in &mut axis_cov[2 * p..2 * p + s] {
            *c += 1;
        }
    }
    let mut coverage = Vec::with_capacity(r * r * r);
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                coverage.push(axis_cov[z] * axis_cov[y] * axis_cov[x]);
            }
        }
    }
    Ok(SubvolumeTiling {
        offsets,
        window_in: s_in,
        window_out: s,
        input_res: rin,
        coverage,
    })
}

fn k3(stride: usize) -> ConvGeometry {
    ConvGeometry::cubic(3, stride, 1)
}

fn spatial(tape: &Tape<f64>, v: Var) -> [usize; 3] {
    let s = tape.shape(v);
    [s[2], s[3], s[4]]
}

/// Probability of the second channel of 2-channel logits: `softmax(l)[1] = sigmoid(l1 - l0)`.
pub fn foreground_probability(tape: &mut Tape<f64>, logits: Var) -> Result<Var> {
    let l0 = tape.narrow(logits, 1, 0, 1)?;
    let l1 = tape.narrow(logits, 1, 1, 1)?;
    let d = tape.sub(l1, l0)?;
    Ok(tape.sigmoid(d))
}

/// Encoder-decoder with skip connections. The down path is one stride-1 convolution
/// followed by three stride-2 convolutions; transposed convolutions return to each
/// skip resolution in turn.
#[derive(Clone, Debug)]
struct UNet {
    down: Vec<Conv>,
    up: Vec<Conv>,
    /// Optional extra upsampling layer and its 1-stride head.
    out: Conv,
    extra_up: Option<Conv>,
}

impl UNet {
    /// `side_channels` are concatenated after the first strided convolution.
    fn new(prefix: &str, cin: usize, side_channels: usize, down: [usize; 4], up: &[usize]) -> Self {
        let mut convs = Vec::new();
        let mut c = cin;
        for (i, &d) in down.iter().enumerate() {
            convs.push(Conv::new(format!("{prefix}.down{i}"), c, d, k3(if i == 0 { 1 } else { 2 })));
            c = d + if i == 1 { side_channels } else { 0 };
        }
        let skips = [down[2], down[1] + side_channels, down[0]];
        let mut ups = Vec::new();
        for (i, &skip) in skips.iter().enumerate() {
            ups.push(Conv::transposed(format!("{prefix}.up{i}"), c, up[i], k3(2)));
            c = up[i] + skip;
        }
        let extra_up = if up.len() == 5 {
            let l = Conv::transposed(format!("{prefix}.up3"), c, up[3], k3(2));
            c = up[3];
            Some(l)
        } else {
            None
        };
        let out = Conv::new(format!("{prefix}.out"), c, *up.last().unwrap(), k3(1));
        UNet {
            down: convs,
            up: ups,
            out,
            extra_up,
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Conv> {
        self.down.iter().chain(&self.up).chain(&self.extra_up).chain(std::iter::once(&self.out))
    }

    fn init(&self, store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
        for l in self.layers() {
            let init = if l.name == self.out.name { Init::Xavier } else { Init::He };
            l.init(store, init, rng)?;
        }
        Ok(())
    }

    /// Returns 2-channel logits.
    fn forward(&self, tape: &mut Tape<f64>, store: &ParamStore<f64>, x: Var, side: Option<Var>) -> Result<Var> {
        let mut skips = Vec::new();
        let mut h = x;
        for (i, l) in self.down.iter().enumerate() {
            h = l.forward(tape, store, h, None)?;
            h = tape.relu(h);
            if i == 1 {
                if let Some(s) = side {
                    let n = tape.shape(h)[0];
                    let s = if tape.shape(s)[0] != n {
                        let parts = vec![s; n];
                        tape.concat(&parts, 0)?
                    } else {
                        s
                    };
                    h = tape.concat(&[h, s], 1)?;
                }
            }
            if i < 3 {
                skips.push(h);
            }
        }
        for l in &self.up {
            let skip = skips.pop().unwrap();
            h = l.forward(tape, store, h, Some(spatial(tape, skip)))?;
            h = tape.relu(h);
            h = tape.concat(&[h, skip], 1)?;
        }
        if let Some(l) = &self.extra_up {
            let d = spatial(tape, h).map(|v| v * 2);
            h = l.forward(tape, store, h, Some(d))?;
            h = tape.relu(h);
        }
        self.out.forward(tape, store, h, None)
    }
}

/// Global and local refinement streams plus the code-to-volume feature map.
#[derive(Clone, Debug)]
pub struct RefinementNet {
    pub cfg: RefinementConfig,
    pub tiling: SubvolumeTiling,
    global: UNet,
    local: UNet,
    features: Dense,
}

/// Outputs of a full refinement pass.
#[derive(Clone, Copy, Debug)]
pub struct RefineOutput {
    /// `U_out` on the coarse grid, `[1, 1, r'/2, r'/2, r'/2]`.
    pub coarse: Var,
    /// Stitched `V`, `[1, 1, r, r, r]`.
    pub refined: Var,
}

impl RefinementNet {
    pub fn new(cfg: RefinementConfig) -> Result<Self> {
        let tiling = plan_tiling(&cfg)?;
        let f = cfg.feature_res();
        Ok(RefinementNet {
            global: UNet::new("ref.g", 1, cfg.feature_channels, cfg.global_down, &cfg.global_up),
            local: UNet::new("ref.l", 2, 0, cfg.local_down, &cfg.local_up),
            features: Dense::new("ref.feat", cfg.code_dim, f * f * f * cfg.feature_channels),
            tiling,
            cfg,
        })
    }

    /// Initializes the global stream and feature map into `global` and the local
    /// stream into `local`, so the two can be optimized separately.
    pub fn init(&self, global: &mut ParamStore<f64>, local: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.global.init(global, rng)?;
        self.features.init(global, Init::Xavier, rng)?;
        self.local.init(local, rng)
    }

    /// Image feature volume `[1, C, r'/4, r'/4, r'/4]` from a `[1, m]` code.
    pub fn feature_volume(&self, tape: &mut Tape<f64>, store: &ParamStore<f64>, code: Var) -> Result<Var> {
        let f = self.cfg.feature_res();
        let v = self.features.forward(tape, store, code)?;
        let v = tape.relu(v);
        tape.reshape(v, &[1, self.cfg.feature_channels, f, f, f])
    }

    /// `U_out` probabilities from `U_in` at `r'` and the image code.
    pub fn global_stream(&self, tape: &mut Tape<f64>, store: &ParamStore<f64>, u_in: Var, code: Var) -> Result<Var> {
        let c = self.cfg.coarse_res();
        let r_in = self.cfg.input_res();
        if tape.shape(u_in) != [1, 1, r_in, r_in, r_in] {
            return Err(Error::Shape {
                op: "global_stream",
                shapes: vec![tape.shape(u_in).to_vec(), vec![1, 1, r_in, r_in, r_in]],
            });
        }
        let down = tape.max_pool3d_2x(u_in)?;
        let feat = self.feature_volume(tape, store, code)?;
        let logits = self.global.forward(tape, store, down, Some(feat))?;
        debug_assert_eq!(spatial(tape, logits), [c, c, c]);
        foreground_probability(tape, logits)
    }

    /// Upsampled probability windows `[Nw, 1, s, s, s]` from input windows and their
    /// guidance, both `[Nw, 1, s', s', s']`.
    pub fn local_stream(&self, tape: &mut Tape<f64>, store: &ParamStore<f64>, p_in: Var, guidance: Var) -> Result<Var> {
        let s = self.cfg.window_in();
        let ps = tape.shape(p_in).to_vec();
        if ps.len() != 5 || ps[1..] != [1, s, s, s] || tape.shape(guidance) != ps.as_slice() {
            return Err(Error::Shape {
                op: "local_stream",
                shapes: vec![ps, tape.shape(guidance).to_vec()],
            });
        }
        let x = tape.concat(&[p_in, guidance], 1)?;
        let logits = self.local.forward(tape, store, x, None)?;
        foreground_probability(tape, logits)
    }

    /// Cuts the tiling's windows from `U_in` and the matching guidance from `U_out`,
    /// runs the local stream and averages the results into `V`.
    pub fn refine_windows(&self, tape: &mut Tape<f64>, store: &ParamStore<f64>, u_in: Var, coarse: Var) -> Result<Var> {
        let t = &self.tiling;
        let signed: Vec<[isize; 3]> = t.offsets.iter().map(|o| o.map(|v| v as isize)).collect();
        let p_in = tape.extract_windows(u_in, &signed, t.window_in)?;
        let g = tape.extract_windows(coarse, &t.coarse_offsets(), t.window_in / 2)?;
        let g = tape.upsample_nearest3d_2x(g)?;
        let p_out = self.local_stream(tape, store, p_in, g)?;
        stitch(tape, &self.tiling, p_out)
    }

    /// Full pass with the global output guiding the local stream.
    pub fn forward(
        &self,
        tape: &mut Tape<f64>,
        global: &ParamStore<f64>,
        local: &ParamStore<f64>,
        u_in: Var,
        code: Var,
    ) -> Result<RefineOutput> {
        let coarse = self.global_stream(tape, global, u_in, code)?;
        let refined = self.refine_windows(tape, local, u_in, coarse)?;
        Ok(RefineOutput { coarse, refined })
    }
}

/// Averages `[Nw, 1, s, s, s]` windows over the tiling's output lattice.
pub fn stitch(tape: &mut Tape<f64>, tiling: &SubvolumeTiling, windows: Var) -> Result<Var> {
    let n = tape.shape(windows).first().copied().unwrap_or(0);
    if n != tiling.offsets.len() {
        return Err(Error::Invalid(format!("stitch expects {} windows, got {n}", tiling.offsets.len())));
    }
    let r = 2 * tiling.input_res;
    tape.stitch_windows(windows, &tiling.output_offsets(), [r, r, r])
}

/// Mean binary cross-entropy `-[y ln v + (1 - y) ln(1 - v)]` against a target grid.
pub fn refine_loss(tape: &mut Tape<f64>, v: Var, target: &VoxelGrid<f64>) -> Result<Var> {
    let r = target.resolution();
    let n = tape.value(v).len();
    if n != r * r * r {
        return Err(Error::Shape {
            op: "refine_loss",
            shapes: vec![tape.shape(v).to_vec(), vec![r, r, r]],
        });
    }
    let shape = tape.shape(v).to_vec();
    let y = Tensor::new(shape.clone(), target.values().to_vec())?;
    let one_minus_y = y.map(|t| 1.0 - t);
    let y = tape.constant(y);
    let ny = tape.constant(one_minus_y);
    let lv = tape.log(v);
    let inv = tape.affine(v, -1.0, 1.0);
    let lnv = tape.log(inv);
    let a = tape.mul(y, lv)?;
    let b = tape.mul(ny, lnv)?;
    let s = tape.add(a, b)?;
    let m = tape.mean(s)?;
    Ok(tape.scale(m, -1.0))
}

/// `L_phi + L_psi + beta L_refine`.
pub fn skeletonnet_loss(tape: &mut Tape<f64>, l_phi: Var, l_psi: Var, l_refine: Var, beta: f64) -> Result<Var> {
    let d = tape.add(l_phi, l_psi)?;
    let r = tape.scale(l_refine, beta);
    tape.add(d, r)
}

/// Target for the global stream: `V*` max-pooled down to the coarse grid.
pub fn coarse_target(target: &VoxelGrid<f64>, coarse_res: usize) -> Result<VoxelGrid<f64>> {
    let r = target.resolution();
    if coarse_res == 0 || r % coarse_res != 0 {
        return Err(Error::Invalid(format!("cannot pool {r}^3 to {coarse_res}^3")));
    }
    target.downsample_max(r / coarse_res)
}

/// Constant tensor view used to feed a fixed `U_in`.
pub fn volume_input(tape: &mut Tape<f64>, grid: &VoxelGrid<f64>) -> Var {
    tape.constant(grid_to_tensor(grid))
}
