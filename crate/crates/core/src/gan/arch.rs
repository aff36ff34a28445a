use super::{GanError, GanResult};
use crate::data::{CHANNELS, WINDOW_POINTS};

/// Full-scale input length: both electrodes flattened channel-major.
pub const FULL_LENGTH: usize = CHANNELS * WINDOW_POINTS;

/// Full-scale encoder output channels, block by block.
pub const ENCODER_CHANNELS: [usize; 8] = [64, 64, 128, 128, 256, 256, 512, 1024];

/// Shape of one feature map as `(length, channels)`.
pub type MapShape = (usize, usize);

/// Network geometry shared by the generator and the discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureConfig {
    /// Full-scale input length before `length_scale` is applied.
    pub input_length: usize,
    pub encoder_channels: [usize; 8],
    /// Odd convolution kernel length.
    pub kernel: usize,
    pub leaky_slope: f64,
    /// Multiplies every channel count (rounded, at least 1).
    pub width_scale: f64,
    /// Multiplies the input length; the result must be divisible by 256.
    pub length_scale: f64,
    /// One skip weight per channel instead of one per level.
    pub per_channel_skips: bool,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            input_length: FULL_LENGTH,
            encoder_channels: ENCODER_CHANNELS,
            kernel: 31,
            leaky_slope: 0.2,
            width_scale: 1.0,
            length_scale: 1.0,
            per_channel_skips: false,
        }
    }
}

impl ArchitectureConfig {
    /// Default geometry at the given width and length scales.
    pub fn scaled(width_scale: f64, length_scale: f64) -> Self {
        Self {
            width_scale,
            length_scale,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> GanResult<()> {
        if self.kernel % 2 == 0 || self.kernel == 0 {
            return Err(GanError::Config(format!(
                "kernel length {} must be odd",
                self.kernel
            )));
        }
        if !(self.width_scale > 0.0 && self.width_scale <= 1.0) {
            return Err(GanError::Config(format!(
                "width scale {} outside (0, 1]",
                self.width_scale
            )));
        }
        if !(self.length_scale > 0.0 && self.length_scale <= 1.0) {
            return Err(GanError::Config(format!(
                "length scale {} outside (0, 1]",
                self.length_scale
            )));
        }
        let scaled = self.input_length as f64 * self.length_scale;
        if scaled.fract() != 0.0 || (scaled as usize) % 256 != 0 || scaled < 256.0 {
            return Err(GanError::Config(format!(
                "input length {scaled} must be a positive multiple of 256"
            )));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(GanError::Config(format!(
                "leaky slope {} outside [0, 1)",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    /// Realized input length.
    pub fn length(&self) -> usize {
        (self.input_length as f64 * self.length_scale).round() as usize
    }

    fn width(&self, c: usize) -> usize {
        ((c as f64 * self.width_scale).round() as usize).max(1)
    }

    /// Realized channels of encoder blocks 1..8.
    pub fn channels(&self) -> [usize; 8] {
        self.encoder_channels.map(|c| self.width(c))
    }

    /// Input followed by the output of each encoder block (9 shapes).
    pub fn encoder_shapes(&self) -> Vec<MapShape> {
        let mut shapes = vec![(self.length(), 1)];
        let mut len = self.length();
        for c in self.channels() {
            len /= 2;
            shapes.push((len, c));
        }
        shapes
    }

    /// Latent code shape.
    pub fn latent_shape(&self) -> MapShape {
        *self.encoder_shapes().last().expect("nine shapes")
    }

    /// Decoder entry (latent ⧺ noise along length) followed by the output of
    /// each decoder block; the mirror image of [`Self::encoder_shapes`].
    pub fn decoder_shapes(&self) -> Vec<MapShape> {
        let enc = self.encoder_shapes();
        let (l, c) = self.latent_shape();
        let mut shapes = vec![(2 * l, c)];
        // enc[7] already has length 2l, so the first block keeps the length.
        shapes.extend(enc[..8].iter().rev());
        shapes
    }

    /// Input channels of the decoder block `k` (0-based) and its output.
    pub(crate) fn decoder_block(&self, k: usize) -> (usize, usize) {
        let d = self.decoder_shapes();
        (d[k].1, d[k + 1].1)
    }

    /// Values in one skip weight.
    pub(crate) fn skip_len(&self, level: usize) -> usize {
        if self.per_channel_skips {
            self.decoder_shapes()[level + 1].1
        } else {
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_is_mirrored() {
        let a = ArchitectureConfig::default();
        a.validate().unwrap();
        let enc = a.encoder_shapes();
        assert_eq!(enc[0], (2048, 1));
        assert_eq!(enc[8], (8, 1024));
        let dec = a.decoder_shapes();
        assert_eq!(dec[0], (16, 1024));
        assert_eq!(dec[1], (16, 512));
        assert_eq!(dec[2], (32, 256));
        assert_eq!(dec[8], (2048, 1));
        for k in 2..9 {
            assert_eq!(dec[k], enc[8 - k]);
        }
    }

    #[test]
    fn scales_divide_widths_and_lengths() {
        let a = ArchitectureConfig::scaled(0.25, 1.0);
        assert_eq!(a.latent_shape(), (8, 256));
        let b = ArchitectureConfig::scaled(0.125, 0.125);
        assert_eq!(b.encoder_shapes()[0], (256, 1));
        assert_eq!(b.latent_shape(), (1, 128));
        assert!(ArchitectureConfig::scaled(1.0, 0.1).validate().is_err());
    }
}
