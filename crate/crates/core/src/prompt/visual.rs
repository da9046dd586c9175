//! Visual affordance overlays drawn onto the observation raster.

use serde::{Deserialize, Serialize};

use crate::annotate::{AffordanceChain, BBox};
use crate::geometry::{point_segment_distance, Vec2};
use crate::raster::Raster;

use super::PromptError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleConfig {
    pub resolution: usize,
    /// Movement stroke width in pixels.
    pub thin_width: f64,
    pub thin_alpha: f64,
    /// Box stroke width and point-marker radius in pixels.
    pub thick_width: f64,
    pub thick_alpha: f64,
    pub object_color: [u8; 3],
    pub grasp_color: [u8; 3],
    pub spatial_color: [u8; 3],
    pub movement_color: [u8; 3],
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            resolution: 96,
            thin_width: 1.0,
            thin_alpha: 0.4,
            thick_width: 3.0,
            thick_alpha: 0.9,
            object_color: [255, 140, 0],
            grasp_color: [255, 0, 200],
            spatial_color: [0, 200, 80],
            movement_color: [0, 110, 255],
        }
    }
}

impl StyleConfig {
    pub fn colors(&self) -> [[u8; 3]; 4] {
        [self.object_color, self.grasp_color, self.spatial_color, self.movement_color]
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |m: &str| Err(PromptError::InvalidStyle(m.to_string()));
        if self.resolution == 0 {
            return bad("resolution must be positive");
        }
        if !(self.thin_width > 0.0 && self.thick_width > 0.0) {
            return bad("stroke widths must be positive");
        }
        if !((0.0..=1.0).contains(&self.thin_alpha) && (0.0..=1.0).contains(&self.thick_alpha)) {
            return bad("opacities must lie in [0, 1]");
        }
        let c = self.colors();
        for i in 0..4 {
            for j in i + 1..4 {
                if c[i] == c[j] {
                    return bad("affordance types need distinct colors");
                }
            }
        }
        Ok(())
    }
}

/// Pixel-space primitive with the stroke distance that covers it.
#[derive(Debug, Clone)]
pub enum Primitive {
    Segment { a: Vec2, b: Vec2, reach: f64 },
    Disc { center: Vec2, radius: f64 },
    Outline { min: Vec2, max: Vec2, reach: f64 },
}

impl Primitive {
    /// Distance from a pixel-space point to the primitive's coverage edge;
    /// non-positive means covered.
    pub fn excess(&self, p: Vec2) -> f64 {
        match *self {
            Primitive::Segment { a, b, reach } => point_segment_distance(p, a, b) - reach,
            Primitive::Disc { center, radius } => p.dist(center) - radius,
            Primitive::Outline { min, max, reach } => {
                let corners = [min, Vec2::new(max.x, min.y), max, Vec2::new(min.x, max.y)];
                (0..4)
                    .map(|i| point_segment_distance(p, corners[i], corners[(i + 1) % 4]))
                    .fold(f64::INFINITY, f64::min)
                    - reach
            }
        }
    }

    fn pixel_bounds(&self, n: usize) -> (usize, usize, usize, usize) {
        let (lo, hi) = match *self {
            Primitive::Segment { a, b, reach } => (
                Vec2::new(a.x.min(b.x) - reach, a.y.min(b.y) - reach),
                Vec2::new(a.x.max(b.x) + reach, a.y.max(b.y) + reach),
            ),
            Primitive::Disc { center, radius } => (
                Vec2::new(center.x - radius, center.y - radius),
                Vec2::new(center.x + radius, center.y + radius),
            ),
            Primitive::Outline { min, max, reach } => {
                (Vec2::new(min.x - reach, min.y - reach), Vec2::new(max.x + reach, max.y + reach))
            }
        };
        let clamp = |v: f64| (v.floor().max(0.0) as usize).min(n);
        (clamp(lo.y - 1.0), clamp(hi.y + 1.0), clamp(lo.x - 1.0), clamp(hi.x + 1.0))
    }
}

/// Workspace point to continuous pixel coordinates (x = column, y = row).
pub fn to_pixel_space(p: Vec2, n: usize) -> Vec2 {
    p * n as f64
}

/// Overlay layers in drawing order: movement, spatial, grasp, object.
pub fn overlay_layers(chain: &AffordanceChain, style: &StyleConfig) -> Vec<(Vec<Primitive>, [u8; 3], f64)> {
    let n = style.resolution;
    let px = |p: Vec2| to_pixel_space(p, n);
    let thin = style.thin_width / 2.0;
    let mut layers = Vec::new();
    if let Some(m) = &chain.movement {
        let prims = if m.path.len() == 1 {
            vec![Primitive::Disc { center: px(m.path[0]), radius: thin }]
        } else {
            m.path.windows(2).map(|w| Primitive::Segment { a: px(w[0]), b: px(w[1]), reach: thin }).collect()
        };
        layers.push((prims, style.movement_color, style.thin_alpha));
    }
    let discs = |pts: &[Vec2]| -> Vec<Primitive> {
        pts.iter().map(|p| Primitive::Disc { center: px(*p), radius: style.thick_width }).collect()
    };
    if let Some(s) = &chain.spatial {
        layers.push((discs(&s.points), style.spatial_color, style.thick_alpha));
    }
    if let Some(g) = &chain.grasp {
        layers.push((discs(&g.points), style.grasp_color, style.thick_alpha));
    }
    if let Some(o) = &chain.object {
        let BBox { x_min, y_min, x_max, y_max } = o.bbox;
        layers.push((
            vec![Primitive::Outline {
                min: px(Vec2::new(x_min, y_min)),
                max: px(Vec2::new(x_max, y_max)),
                reach: style.thick_width / 2.0,
            }],
            style.object_color,
            style.thick_alpha,
        ));
    }
    layers
}

/// Draws the chain onto a copy of `obs`. Each layer blends every covered
/// pixel exactly once.
pub fn render_visual(obs: &Raster, chain: &AffordanceChain, style: &StyleConfig) -> Result<Raster, PromptError> {
    let n = style.resolution;
    if obs.width() != n || obs.height() != n {
        return Err(PromptError::ResolutionMismatch { expected: n, width: obs.width(), height: obs.height() });
    }
    let mut out = obs.clone();
    let mut covered = vec![false; n * n];
    for (prims, color, alpha) in overlay_layers(chain, style) {
        covered.iter_mut().for_each(|c| *c = false);
        for prim in &prims {
            let (r0, r1, c0, c1) = prim.pixel_bounds(n);
            for row in r0..r1 {
                for col in c0..c1 {
                    let center = Vec2::new(col as f64 + 0.5, row as f64 + 0.5);
                    if prim.excess(center) <= 0.0 {
                        covered[row * n + col] = true;
                    }
                }
            }
        }
        for (i, _) in covered.iter().enumerate().filter(|(_, c)| **c) {
            out.blend(i / n, i % n, color, alpha);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{GraspAffordance, MovementAffordance, ObjectAffordance};

    fn table() -> Raster {
        Raster::filled(96, 96, [200, 190, 170])
    }

    #[test]
    fn empty_chain_is_identity() {
        let obs = table();
        assert_eq!(render_visual(&obs, &AffordanceChain::default(), &StyleConfig::default()).unwrap(), obs);
    }

    #[test]
    fn grasp_marker_is_local() {
        let obs = table();
        let style = StyleConfig::default();
        let chain = AffordanceChain {
            grasp: Some(GraspAffordance { points: vec![Vec2::new(0.5, 0.5)], object: 1 }),
            ..Default::default()
        };
        let out = render_visual(&obs, &chain, &style).unwrap();
        let center = Vec2::new(48.0, 48.0);
        let expected = {
            let mut r = obs.clone();
            r.blend(47, 47, style.grasp_color, style.thick_alpha);
            r.get(47, 47)
        };
        for row in 0..96 {
            for col in 0..96 {
                let d = Vec2::new(col as f64 + 0.5, row as f64 + 0.5).dist(center);
                if d <= style.thick_width {
                    assert_eq!(out.get(row, col), expected);
                } else {
                    assert_eq!(out.get(row, col), obs.get(row, col));
                }
            }
        }
    }

    #[test]
    fn thin_path_touches_fewer_pixels_than_thick_box() {
        let obs = table();
        let style = StyleConfig::default();
        let n = 96.0;
        // 100 px long path: 60 px right then 40 px down.
        let path = vec![
            Vec2::new(10.5 / n, 10.5 / n),
            Vec2::new(70.5 / n, 10.5 / n),
            Vec2::new(70.5 / n, 50.5 / n),
        ];
        let thin = AffordanceChain { movement: Some(MovementAffordance { path }), ..Default::default() };
        // 25 x 25 px box: perimeter 100 px.
        let bbox = BBox::new(20.0 / n, 20.0 / n, 45.0 / n, 45.0 / n);
        let thick = AffordanceChain {
            object: Some(ObjectAffordance { name: "cup".into(), bbox }),
            ..Default::default()
        };
        let a = render_visual(&obs, &thin, &style).unwrap().diff_count(&obs);
        let b = render_visual(&obs, &thick, &style).unwrap().diff_count(&obs);
        assert!((95..=105).contains(&a), "thin path changed {a} pixels");
        assert!(a < b, "thin {a} vs thick {b}");
    }

    #[test]
    fn style_validation() {
        assert!(StyleConfig::default().validate().is_ok());
        let s = StyleConfig { grasp_color: [255, 140, 0], ..Default::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn resolution_mismatch() {
        let obs = Raster::filled(64, 64, [0, 0, 0]);
        assert!(matches!(
            render_visual(&obs, &AffordanceChain::default(), &StyleConfig::default()),
            Err(PromptError::ResolutionMismatch { .. })
        ));
    }
}
