//! Layer-string notation for the generator, predictor and discriminator.
//!
//! Tokens are separated by `-`:
//! - `{k}n{c}s{s}{Act}`: k x k convolution, c filters, stride s; `Act` is
//!   `ReLU`, `LReLU` (slope 0.2), `Tanh` or empty.
//! - `R{c}`: residual block of two 3x3 stride-1 convolutions with c filters.
//! - `up{c}`: 2x bilinear upsampling, then 3x3 stride-1 conv + ReLU.
//! - `down{c}`: 3x3 stride-2 conv + LeakyReLU(0.2).
//!
//! `R256x6` (or `R256×6`) repeats a token. Padding is `floor(k / 2)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COLOR_PATH: &str = "7n3s1ReLU-3n64s2ReLU-3n128s2ReLU-R256-R256-R256-R256-R256-R256-up512-up256";
pub const GEOMETRY_PATH: &str = "7n3s1ReLU-3n64s2ReLU-3n128s2ReLU-R256-R256-R256-R256-R256-R256-up256-up128";
pub const PREDICTOR: &str =
    "down64-down128-down256-down512-down512-down512-up1024-up1024-up1024-up512-up256-up128";
/// 70x70 PatchGAN discriminator.
pub const DISCRIMINATOR: &str = "4n64s2LReLU-4n128s2LReLU-4n256s2LReLU-4n512s1LReLU-4n1s1";

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    ResidualPair,
    UpsampleConv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    /// Slope [`LEAKY_SLOPE`].
    LeakyRelu,
    Tanh,
}

impl Activation {
    fn tag(self) -> &'static str {
        match self {
            Activation::None => "",
            Activation::Relu => "ReLU",
            Activation::LeakyRelu => "LReLU",
            Activation::Tanh => "Tanh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_channels: usize,
    pub activation: Activation,
}

impl Layer {
    pub fn conv(kernel: usize, channels: usize, stride: usize, activation: Activation) -> Layer {
        Layer {
            kind: LayerKind::Conv,
            kernel,
            stride,
            padding: kernel / 2,
            out_channels: channels,
            activation,
        }
    }

    pub fn residual(channels: usize) -> Layer {
        Layer {
            kind: LayerKind::ResidualPair,
            ..Layer::conv(3, channels, 1, Activation::Relu)
        }
    }

    pub fn up(channels: usize) -> Layer {
        Layer {
            kind: LayerKind::UpsampleConv,
            ..Layer::conv(3, channels, 1, Activation::Relu)
        }
    }

    pub fn down(channels: usize) -> Layer {
        Layer::conv(3, channels, 2, Activation::LeakyRelu)
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LayerKind::ResidualPair => write!(f, "R{}", self.out_channels),
            LayerKind::UpsampleConv => write!(f, "up{}", self.out_channels),
            LayerKind::Conv if *self == Layer::down(self.out_channels) => write!(f, "down{}", self.out_channels),
            LayerKind::Conv => write!(
                f,
                "{}n{}s{}{}",
                self.kernel,
                self.out_channels,
                self.stride,
                self.activation.tag()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ConvSpec {
    pub layers: Vec<Layer>,
}

impl fmt::Display for ConvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.layers.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for ConvSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<ConvSpec> {
        parse_arch(s)
    }
}

fn number(s: &str, token: &str) -> Result<usize> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(Error::Arch(format!("bad number {s:?} in token {token:?}"))),
    }
}

fn split_digits(s: &str) -> (&str, &str) {
    let end = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    s.split_at(end)
}

fn parse_token(token: &str) -> Result<Layer> {
    if let Some(rest) = token.strip_prefix("down") {
        return Ok(Layer::down(number(rest, token)?));
    }
    if let Some(rest) = token.strip_prefix("up") {
        return Ok(Layer::up(number(rest, token)?));
    }
    if let Some(rest) = token.strip_prefix('R') {
        return Ok(Layer::residual(number(rest, token)?));
    }
    let unknown = || Error::Arch(format!("unknown token {token:?}"));
    let (k, rest) = split_digits(token);
    let rest = rest.strip_prefix('n').ok_or_else(unknown)?;
    let (c, rest) = split_digits(rest);
    let rest = rest.strip_prefix('s').ok_or_else(unknown)?;
    let (st, act) = split_digits(rest);
    let activation = match act {
        "" => Activation::None,
        "ReLU" => Activation::Relu,
        "LReLU" => Activation::LeakyRelu,
        "Tanh" => Activation::Tanh,
        _ => return Err(unknown()),
    };
    Ok(Layer::conv(number(k, token)?, number(c, token)?, number(st, token)?, activation))
}

pub fn parse_arch(spec: &str) -> Result<ConvSpec> {
    let spec: String = spec.chars().filter(|c| !c.is_whitespace() && *c != '\\').collect();
    if spec.is_empty() {
        return Err(Error::Arch("empty architecture string".into()));
    }
    let mut layers = Vec::new();
    for token in spec.split('-') {
        let (base, repeat) = match token.rsplit_once(['x', '×']) {
            Some((b, n)) if !b.is_empty() && n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() => {
                (b, number(n, token)?)
            }
            _ => (token, 1),
        };
        let layer = parse_token(base)?;
        layers.extend(std::iter::repeat_n(layer, repeat));
    }
    Ok(ConvSpec { layers })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

fn conv_out(n: i64, k: usize, s: usize, p: usize) -> i64 {
    (n + 2 * p as i64 - k as i64).div_euclid(s as i64) + 1
}

/// Output shape after each layer.
pub fn shape_trace(spec: &ConvSpec, input: Shape) -> Result<Vec<Shape>> {
    if input.height == 0 || input.width == 0 || input.channels == 0 {
        return Err(Error::Arch(format!("empty input {input:?}")));
    }
    let mut cur = input;
    let mut out = Vec::with_capacity(spec.layers.len());
    for (i, l) in spec.layers.iter().enumerate() {
        let (mut h, mut w) = (cur.height as i64, cur.width as i64);
        match l.kind {
            LayerKind::Conv => {
                h = conv_out(h, l.kernel, l.stride, l.padding);
                w = conv_out(w, l.kernel, l.stride, l.padding);
            }
            LayerKind::ResidualPair => {
                for _ in 0..2 {
                    h = conv_out(h, l.kernel, l.stride, l.padding);
                    w = conv_out(w, l.kernel, l.stride, l.padding);
                }
            }
            LayerKind::UpsampleConv => {
                h = conv_out(2 * h, l.kernel, l.stride, l.padding);
                w = conv_out(2 * w, l.kernel, l.stride, l.padding);
            }
        }
        if h < 1 || w < 1 {
            return Err(Error::Arch(format!("layer {i} ({l}) produces {h}x{w}")));
        }
        cur = Shape {
            height: h as usize,
            width: w as usize,
            channels: l.out_channels,
        };
        out.push(cur);
    }
    Ok(out)
}

/// Receptive field in input pixels of one output unit.
pub fn receptive_field(spec: &ConvSpec) -> Result<usize> {
    let mut rf = 1usize;
    let mut jump = 1usize;
    for l in &spec.layers {
        match l.kind {
            LayerKind::UpsampleConv => {
                return Err(Error::Arch(format!("receptive field undefined across upsampling ({l})")));
            }
            LayerKind::Conv => {
                rf += (l.kernel - 1) * jump;
                jump *= l.stride;
            }
            LayerKind::ResidualPair => {
                for _ in 0..2 {
                    rf += (l.kernel - 1) * jump;
                    jump *= l.stride;
                }
            }
        }
    }
    Ok(rf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sq(n: usize, c: usize) -> Shape {
        Shape { height: n, width: n, channels: c }
    }

    #[test]
    fn parses_paper_tokens() {
        let s = parse_arch("down64-down128").unwrap();
        assert_eq!(s.layers.len(), 2);
        assert_eq!(s.layers.iter().map(|l| l.stride).collect::<Vec<_>>(), [2, 2]);
        assert_eq!(s.layers.iter().map(|l| l.out_channels).collect::<Vec<_>>(), [64, 128]);
        let r = parse_arch("R256").unwrap().layers[0];
        assert_eq!((r.kind, r.kernel, r.stride, r.out_channels), (LayerKind::ResidualPair, 3, 1, 256));
        assert!(parse_arch("xyz99").is_err());
        assert!(parse_arch("3n0s1ReLU").is_err());
        assert!(parse_arch("3n64s1Swish").is_err());
        assert_eq!(parse_arch("R256x6").unwrap().layers.len(), 6);
        assert_eq!(parse_arch("R256×6").unwrap(), parse_arch("R256-R256-R256-R256-R256-R256").unwrap());
    }

    #[test]
    fn generator_shapes() {
        let trace = shape_trace(&parse_arch(COLOR_PATH).unwrap(), sq(256, 3)).unwrap();
        for (l, s) in parse_arch(COLOR_PATH).unwrap().layers.iter().zip(&trace) {
            if l.kind == LayerKind::ResidualPair {
                assert_eq!((s.height, s.width), (64, 64));
            }
        }
        assert_eq!(*trace.last().unwrap(), sq(256, 256));
        let geo = shape_trace(&parse_arch(GEOMETRY_PATH).unwrap(), sq(256, 3)).unwrap();
        assert_eq!(*geo.last().unwrap(), sq(256, 128));
    }

    #[test]
    fn predictor_bottleneck() {
        let trace = shape_trace(&parse_arch(PREDICTOR).unwrap(), sq(256, 3)).unwrap();
        assert_eq!(trace[5], sq(4, 512));
        assert_eq!(*trace.last().unwrap(), sq(256, 128));
    }

    #[test]
    fn receptive_fields() {
        assert_eq!(receptive_field(&parse_arch("3n8s1").unwrap()).unwrap(), 3);
        assert_eq!(receptive_field(&parse_arch("3n8s1-3n8s1").unwrap()).unwrap(), 5);
        assert_eq!(receptive_field(&parse_arch(DISCRIMINATOR).unwrap()).unwrap(), 70);
        assert!(receptive_field(&parse_arch("up64").unwrap()).is_err());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(shape_trace(&parse_arch("down8").unwrap(), sq(0, 3)).is_err());
        // Half padding never shrinks a side below one pixel.
        let deep = shape_trace(&parse_arch("down8x12").unwrap(), sq(256, 3)).unwrap();
        assert_eq!(*deep.last().unwrap(), sq(1, 8));
    }

    fn layer() -> impl Strategy<Value = Layer> {
        let act = prop_oneof![
            Just(Activation::None),
            Just(Activation::Relu),
            Just(Activation::LeakyRelu),
            Just(Activation::Tanh)
        ];
        prop_oneof![
            (1usize..9, 1usize..2048, 1usize..5, act).prop_map(|(k, c, s, a)| Layer::conv(k, c, s, a)),
            (1usize..2048).prop_map(Layer::residual),
            (1usize..2048).prop_map(Layer::up),
            (1usize..2048).prop_map(Layer::down),
        ]
    }

    proptest! {
        #[test]
        fn display_round_trips(layers in prop::collection::vec(layer(), 1..16)) {
            let spec = ConvSpec { layers };
            prop_assert_eq!(parse_arch(&spec.to_string()).unwrap(), spec);
        }
    }
}
