use std::fs;
use std::path::Path;

use crate::audio::AudioClip;
use crate::ciwgan::{sample_latents, Generator, LatentCode};
use crate::corpus::SyllableClass;
use crate::detector::TokenLabel;

use super::{check_rates, Feature, Labeler, ProbeError, CHUNK};

#[derive(Clone, Debug, PartialEq)]
pub struct ManipulationConfig {
    pub levels: Vec<f64>,
    pub n_base: usize,
    /// Categorical class held fixed in every base vector.
    pub phi: usize,
    pub seed: u64,
}

impl Default for ManipulationConfig {
    fn default() -> Self {
        Self {
            levels: (-5..=5).map(f64::from).collect(),
            n_base: 100,
            phi: 0,
            seed: 0,
        }
    }
}

impl ManipulationConfig {
    fn validate(&self, generator: &dyn Generator) -> Result<(), ProbeError> {
        if self.levels.is_empty() || self.n_base == 0 {
            return Err(ProbeError::Config("levels and n_base must be non-empty".into()));
        }
        if self.levels.iter().any(|v| !v.is_finite()) {
            return Err(ProbeError::Config("levels must be finite".into()));
        }
        if self.phi >= generator.n_phi() {
            return Err(ProbeError::Config(format!(
                "phi class {} out of {}",
                self.phi,
                generator.n_phi()
            )));
        }
        Ok(())
    }

    /// Fresh base vectors with φ fixed to `self.phi`.
    pub fn base_codes(&self, generator: &dyn Generator) -> Vec<LatentCode> {
        let mut codes = sample_latents(generator.n_phi(), generator.n_z(), self.n_base, self.seed);
        codes.iter_mut().for_each(|c| c.phi = self.phi);
        codes
    }
}

/// Verdict counts over the base vectors of one level or grid cell.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GridCell {
    pub nasal_vowel: usize,
    pub nasal_consonant: usize,
    /// Indexed by [`SyllableClass::index`].
    pub classes: [usize; 4],
}

impl GridCell {
    fn add(&mut self, l: &TokenLabel) {
        self.nasal_vowel += l.nasal_vowel_present as usize;
        self.nasal_consonant += l.nasal_consonant_present as usize;
        self.classes[l.syllable_class.index()] += 1;
    }

    pub fn count(&self, feature: Feature) -> usize {
        match feature {
            Feature::NasalVowel => self.nasal_vowel,
            Feature::NasalConsonant => self.nasal_consonant,
        }
    }

    /// Most frequent class; ties go to the lower class index.
    pub fn modal_class(&self) -> SyllableClass {
        let best = (0..4).fold(0, |b, i| if self.classes[i] > self.classes[b] { i } else { b });
        SyllableClass::ALL[best]
    }
}

fn check_var(generator: &dyn Generator, var: usize) -> Result<(), ProbeError> {
    if var >= generator.n_z() {
        return Err(ProbeError::Variable {
            var: format!("z{var}"),
            dims: generator.n_z(),
        });
    }
    Ok(())
}

/// Generates and labels each code, handing `(index, clip, label)` to `sink`.
fn run_codes(
    generator: &dyn Generator,
    labeler: &dyn Labeler,
    codes: &[LatentCode],
    mut sink: impl FnMut(usize, AudioClip, TokenLabel),
) -> Result<(), ProbeError> {
    for (c, chunk) in codes.chunks(CHUNK).enumerate() {
        for (i, clip) in generator.generate_many(chunk)?.into_iter().enumerate() {
            let label = labeler.label(&clip)?;
            sink(c * CHUNK + i, clip, label);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleSweep {
    pub var: usize,
    pub levels: Vec<f64>,
    pub n_base: usize,
    pub cells: Vec<GridCell>,
    /// `clips[level][base]`, kept only on request.
    pub clips: Option<Vec<Vec<AudioClip>>>,
}

impl SingleSweep {
    pub fn proportion(&self, level: usize, feature: Feature) -> f64 {
        self.cells[level].count(feature) as f64 / self.n_base as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variable,level,nasal_vowel,nasal_consonant,modal_class\n");
        for (lv, c) in self.levels.iter().zip(&self.cells) {
            s.push_str(&format!(
                "z{},{lv},{},{},{}\n",
                self.var,
                c.nasal_vowel as f64 / self.n_base as f64,
                c.nasal_consonant as f64 / self.n_base as f64,
                c.modal_class()
            ));
        }
        s
    }
}

/// Sets `z[var]` to each level in turn for every base vector, holding the
/// rest fixed, and aggregates the verdicts per level.
pub fn manipulate_single(
    generator: &dyn Generator,
    labeler: &dyn Labeler,
    var: usize,
    config: &ManipulationConfig,
    keep_clips: bool,
) -> Result<SingleSweep, ProbeError> {
    check_rates(generator, labeler)?;
    check_var(generator, var)?;
    config.validate(generator)?;
    let base = config.base_codes(generator);
    let mut cells = vec![GridCell::default(); config.levels.len()];
    let mut clips: Option<Vec<Vec<AudioClip>>> = keep_clips.then(|| vec![Vec::new(); config.levels.len()]);
    for (li, &level) in config.levels.iter().enumerate() {
        let codes: Vec<LatentCode> = base
            .iter()
            .map(|b| {
                let mut c = b.clone();
                c.z[var] = level as f32;
                c
            })
            .collect();
        run_codes(generator, labeler, &codes, |_, clip, label| {
            cells[li].add(&label);
            if let Some(store) = clips.as_mut() {
                store[li].push(clip);
            }
        })?;
    }
    Ok(SingleSweep {
        var,
        levels: config.levels.clone(),
        n_base: config.n_base,
        cells,
        clips,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManipulationGrid {
    pub var_x: usize,
    pub var_y: usize,
    pub levels: Vec<f64>,
    pub n_base: usize,
    /// Row-major by x level: `cells[ix * levels.len() + iy]`.
    pub cells: Vec<GridCell>,
}

impl ManipulationGrid {
    pub fn cell(&self, ix: usize, iy: usize) -> &GridCell {
        &self.cells[ix * self.levels.len() + iy]
    }

    pub fn proportion(&self, ix: usize, iy: usize, feature: Feature) -> f64 {
        self.cell(ix, iy).count(feature) as f64 / self.n_base as f64
    }

    /// The same grid with the roles of the two variables exchanged.
    pub fn transpose(&self) -> Self {
        let n = self.levels.len();
        let mut cells = Vec::with_capacity(self.cells.len());
        for iy in 0..n {
            for ix in 0..n {
                cells.push(self.cell(ix, iy).clone());
            }
        }
        Self {
            var_x: self.var_y,
            var_y: self.var_x,
            levels: self.levels.clone(),
            n_base: self.n_base,
            cells,
        }
    }

    pub fn to_csv(&self, feature: Feature) -> String {
        let mut s = String::from("x_level,y_level,proportion,modal_class\n");
        for (ix, x) in self.levels.iter().enumerate() {
            for (iy, y) in self.levels.iter().enumerate() {
                s.push_str(&format!(
                    "{x},{y},{},{}\n",
                    self.proportion(ix, iy, feature),
                    self.cell(ix, iy).modal_class()
                ));
            }
        }
        s
    }
}

/// Every combination of levels for two variables, each cell aggregating
/// one generation per base vector.
pub fn manipulate_pair(
    generator: &dyn Generator,
    labeler: &dyn Labeler,
    var_x: usize,
    var_y: usize,
    config: &ManipulationConfig,
) -> Result<ManipulationGrid, ProbeError> {
    check_rates(generator, labeler)?;
    check_var(generator, var_x)?;
    check_var(generator, var_y)?;
    if var_x == var_y {
        return Err(ProbeError::SameVariable(var_x));
    }
    config.validate(generator)?;
    let base = config.base_codes(generator);
    let mut cells = Vec::with_capacity(config.levels.len().pow(2));
    for &x in &config.levels {
        for &y in &config.levels {
            let codes: Vec<LatentCode> = base
                .iter()
                .map(|b| {
                    let mut c = b.clone();
                    c.z[var_x] = x as f32;
                    c.z[var_y] = y as f32;
                    c
                })
                .collect();
            let mut cell = GridCell::default();
            run_codes(generator, labeler, &codes, |_, _, label| cell.add(&label))?;
            cells.push(cell);
        }
    }
    Ok(ManipulationGrid {
        var_x,
        var_y,
        levels: config.levels.clone(),
        n_base: config.n_base,
        cells,
    })
}

/// Full-intensity colour per feature; intermediate proportions blend
/// linearly from white.
fn feature_colour(feature: Feature) -> [u8; 3] {
    match feature {
        Feature::NasalVowel => [0, 110, 0],
        Feature::NasalConsonant => [190, 0, 0],
    }
}

/// Pixels per grid cell edge in exported heatmaps.
pub const HEATMAP_SCALE: usize = 16;

/// Writes `<stem>.csv` and a binary PPM `<stem>.ppm`. The x level grows to
/// the right and the y level grows upwards.
pub fn export_heatmap(grid: &ManipulationGrid, feature: Feature, stem: &Path) -> Result<(), ProbeError> {
    fs::write(stem.with_extension("csv"), grid.to_csv(feature))?;
    let n = grid.levels.len();
    let side = n * HEATMAP_SCALE;
    let colour = feature_colour(feature);
    let mut img = format!("P6\n{side} {side}\n255\n").into_bytes();
    for row in 0..side {
        let iy = n - 1 - row / HEATMAP_SCALE;
        for col in 0..side {
            let t = grid.proportion(col / HEATMAP_SCALE, iy, feature);
            for &c in &colour {
                img.push((255.0 - t * (255.0 - c as f64)).round() as u8);
            }
        }
    }
    fs::write(stem.with_extension("ppm"), img)?;
    Ok(())
}
