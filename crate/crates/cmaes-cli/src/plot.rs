//! 2-D trajectory visualization: per-generation SVG frames showing the
//! objective contours, the sampled population, and the distribution's
//! 1-sigma ellipse, plus an animated SVG assembling all frames.

use anyhow::{bail, Result};
use cmaes::{CmaEs, EvaluatedSolution};
use nalgebra::DVector;

use crate::functions::BenchmarkFunction;

#[derive(Debug, Clone)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Semi-axes `sigma * sqrt(eigenvalue)`.
    pub axes: [f64; 2],
    /// Rotation of the first axis, radians.
    pub angle: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryFrame {
    pub generation: u64,
    pub mean: [f64; 2],
    pub ellipse: Ellipse,
    pub points: Vec<[f64; 2]>,
    pub best_value: f64,
}

#[derive(Debug, Clone)]
pub struct PlotConfig {
    pub function: String,
    pub seed: u64,
    pub generations: u64,
    pub sigma0: f64,
    pub mean0: Vec<f64>,
    pub popsize: Option<usize>,
    /// Plot window, same for both axes.
    pub window: (f64, f64),
}

impl PlotConfig {
    pub fn new(function: &str) -> Self {
        PlotConfig {
            function: function.into(),
            seed: 0,
            generations: 30,
            sigma0: 1.0,
            mean0: vec![0.0, 0.0],
            popsize: None,
            window: (-4.0, 4.0),
        }
    }
}

fn ellipse_of(es: &mut CmaEs) -> Result<Ellipse> {
    let (basis, sqrt_eig) = es.sampling_basis()?;
    // Largest axis first so the reported angle tracks the principal axis.
    let (i0, i1) = if sqrt_eig[0] >= sqrt_eig[1] { (0, 1) } else { (1, 0) };
    let sigma = es.sigma();
    Ok(Ellipse {
        center: [es.mean()[0], es.mean()[1]],
        axes: [sigma * sqrt_eig[i0], sigma * sqrt_eig[i1]],
        angle: basis[(1, i0)].atan2(basis[(0, i0)]),
    })
}

/// Runs a 2-D problem and records one frame per generation.
pub fn collect_frames(config: &PlotConfig) -> Result<Vec<TrajectoryFrame>> {
    if config.mean0.len() != 2 {
        bail!("trajectory plots are 2-D only");
    }
    let mut function = BenchmarkFunction::by_name(&config.function, 2, config.seed)?;
    let mut opts = CmaEs::options(config.mean0.clone(), config.sigma0).seed(config.seed);
    if let Some(p) = config.popsize {
        opts = opts.population_size(p);
    }
    let mut es = opts.build()?;
    let mut frames = Vec::new();
    for _ in 0..config.generations {
        let sols: cmaes::Result<Vec<EvaluatedSolution>> = (0..es.population_size())
            .map(|_| {
                let x = es.ask()?;
                let v = function.eval(&x);
                Ok(EvaluatedSolution::new(x, v))
            })
            .collect();
        let sols = sols?;
        let points: Vec<[f64; 2]> = sols.iter().map(|s| [s.x[0], s.x[1]]).collect();
        es.tell(&sols)?;
        frames.push(TrajectoryFrame {
            generation: es.generation(),
            mean: [es.mean()[0], es.mean()[1]],
            ellipse: ellipse_of(&mut es)?,
            points,
            best_value: es.best().map_or(f64::NAN, |b| b.value),
        });
        if es.should_stop().is_some() {
            break;
        }
    }
    Ok(frames)
}

/// Maps problem coordinates to SVG pixel coordinates (y flipped).
struct View {
    lo: f64,
    hi: f64,
    size: f64,
}

impl View {
    fn x(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo) * self.size
    }

    fn y(&self, v: f64) -> f64 {
        self.size - (v - self.lo) / (self.hi - self.lo) * self.size
    }
}

/// Marching-squares iso-lines of `f` at `level` over an `n x n` grid.
fn contour_segments(
    f: &mut BenchmarkFunction,
    level: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Vec<[[f64; 2]; 2]> {
    let step = (hi - lo) / n as f64;
    let mut grid = vec![vec![0.0f64; n + 1]; n + 1];
    for (i, row) in grid.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let x = lo + i as f64 * step;
            let y = lo + j as f64 * step;
            *cell = f.eval(&DVector::from_vec(vec![x, y]));
        }
    }
    // Linear interpolation of the crossing point along one cell edge.
    let lerp = |a: f64, b: f64, va: f64, vb: f64| -> f64 {
        if (vb - va).abs() < 1e-300 {
            (a + b) / 2.0
        } else {
            a + (level - va) / (vb - va) * (b - a)
        }
    };
    let mut segments = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x0 = lo + i as f64 * step;
            let x1 = x0 + step;
            let y0 = lo + j as f64 * step;
            let y1 = y0 + step;
            let v = [
                grid[i][j],         // bottom-left
                grid[i + 1][j],     // bottom-right
                grid[i + 1][j + 1], // top-right
                grid[i][j + 1],     // top-left
            ];
            let mut case = 0usize;
            for (bit, &val) in v.iter().enumerate() {
                if val > level {
                    case |= 1 << bit;
                }
            }
            if case == 0 || case == 15 {
                continue;
            }
            // Crossing points on the four edges (bottom, right, top, left).
            let pts = [
                [lerp(x0, x1, v[0], v[1]), y0],
                [x1, lerp(y0, y1, v[1], v[2])],
                [lerp(x0, x1, v[3], v[2]), y1],
                [x0, lerp(y0, y1, v[0], v[3])],
            ];
            // Edge pairs per marching-squares case (ambiguous saddles split
            // arbitrarily but consistently).
            const EDGES: [&[(usize, usize)]; 16] = [
                &[],
                &[(3, 0)],
                &[(0, 1)],
                &[(3, 1)],
                &[(1, 2)],
                &[(3, 0), (1, 2)],
                &[(0, 2)],
                &[(3, 2)],
                &[(2, 3)],
                &[(2, 0)],
                &[(0, 1), (2, 3)],
                &[(2, 1)],
                &[(1, 3)],
                &[(1, 0)],
                &[(0, 3)],
                &[],
            ];
            for &(a, b) in EDGES[case] {
                segments.push([pts[a], pts[b]]);
            }
        }
    }
    segments
}

fn ellipse_svg(e: &Ellipse, view: &View, extra: &str) -> String {
    let cx = view.x(e.center[0]);
    let cy = view.y(e.center[1]);
    let rx = e.axes[0] / (view.hi - view.lo) * view.size;
    let ry = e.axes[1] / (view.hi - view.lo) * view.size;
    // SVG angles run clockwise because the y axis is flipped.
    let deg = -e.angle.to_degrees();
    format!(
        "<ellipse cx=\"0\" cy=\"0\" rx=\"{rx:.2}\" ry=\"{ry:.2}\" fill=\"none\" \
         stroke=\"#cc3333\" stroke-width=\"1.5\" \
         transform=\"translate({cx:.2} {cy:.2}) rotate({deg:.2})\"{extra}/>"
    )
}

fn frame_group(frame: &TrajectoryFrame, view: &View) -> String {
    let mut s = String::new();
    for p in &frame.points {
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#3355bb\"/>",
            view.x(p[0]),
            view.y(p[1])
        ));
    }
    s.push_str(&format!(
        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#cc3333\"/>",
        view.x(frame.mean[0]),
        view.y(frame.mean[1])
    ));
    s.push_str(&ellipse_svg(&frame.ellipse, view, ""));
    s.push_str(&format!(
        "<text x=\"8\" y=\"16\" font-size=\"12\">generation {} best {:.3e}</text>",
        frame.generation, frame.best_value
    ));
    s
}

fn contours_svg(function: &mut BenchmarkFunction, view: &View) -> String {
    // Log-spaced levels based on the window-corner value give usable
    // contours for the quadratic-like benchmark functions.
    let corner = function.eval(&DVector::from_vec(vec![view.hi, view.hi]));
    let mut s = String::new();
    for k in 1..=6 {
        let level = corner * 10f64.powi(-(6 - k) as i32 * 1);
        for seg in contour_segments(function, level, view.lo, view.hi, 60) {
            s.push_str(&format!(
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
                 stroke=\"#bbbbbb\" stroke-width=\"0.7\"/>",
                view.x(seg[0][0]),
                view.y(seg[0][1]),
                view.x(seg[1][0]),
                view.y(seg[1][1])
            ));
        }
    }
    s
}

const FRAME_SIZE: f64 = 480.0;

/// Renders one SVG per frame plus `animation.svg`; returns the file names
/// written into `out_dir`.
pub fn render_frames(
    config: &PlotConfig,
    frames: &[TrajectoryFrame],
    out_dir: &std::path::Path,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir)?;
    let view = View {
        lo: config.window.0,
        hi: config.window.1,
        size: FRAME_SIZE,
    };
    let mut function = BenchmarkFunction::by_name(&config.function, 2, config.seed)?;
    let background = contours_svg(&mut function, &view);
    let header = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" \
         viewBox=\"0 0 {0} {0}\"><rect width=\"100%\" height=\"100%\" fill=\"white\"/>",
        FRAME_SIZE
    );
    let mut written = Vec::new();
    for (i, frame) in frames.iter().enumerate() {
        let name = format!("frame_{i:04}.svg");
        let body = format!("{header}{background}{}</svg>", frame_group(frame, &view));
        std::fs::write(out_dir.join(&name), body)?;
        written.push(name);
    }

    // Single animated SVG: all frames stacked, visibility switched by SMIL;
    // the last frame stays visible when the animation ends.
    if !frames.is_empty() {
        let dt = 0.2; // seconds per frame
        let mut anim = String::new();
        anim.push_str(&header);
        anim.push_str(&background);
        for (i, frame) in frames.iter().enumerate() {
            let begin = i as f64 * dt;
            let last = i + 1 == frames.len();
            anim.push_str(&format!(
                "<g visibility=\"hidden\">\
                 <set attributeName=\"visibility\" to=\"visible\" begin=\"{begin:.2}s\"/>{}",
                if last {
                    String::new()
                } else {
                    format!(
                        "<set attributeName=\"visibility\" to=\"hidden\" begin=\"{:.2}s\"/>",
                        begin + dt
                    )
                }
            ));
            anim.push_str(&frame_group(frame, &view));
            anim.push_str("</g>");
        }
        anim.push_str("</svg>");
        std::fs::write(out_dir.join("animation.svg"), anim)?;
        written.push("animation.svg".into());
    }
    Ok(written)
}
