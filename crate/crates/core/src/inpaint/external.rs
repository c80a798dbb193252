use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use image::{ColorType, DynamicImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, ColorRaster, HeightRaster};

const PLACEHOLDERS: [&str; 3] = ["{image}", "{mask}", "{out}"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExternalParams {
    /// Command line with `{image}`, `{mask}` and `{out}` placeholders. Split
    /// with shell quoting rules and run directly, not through a shell.
    pub command: String,
    pub timeout_secs: f64,
    /// Upper bound on concurrently running backend processes.
    pub max_concurrent: usize,
}

impl Default for ExternalParams {
    fn default() -> Self {
        Self {
            command: String::new(),
            timeout_secs: 300.0,
            max_concurrent: 1,
        }
    }
}

impl ExternalParams {
    pub fn validate(&self) -> Result<()> {
        for p in PLACEHOLDERS {
            if !self.command.contains(p) {
                return Err(Error::InvalidArgument(format!(
                    "external command template `{}` lacks the {p} placeholder",
                    self.command
                )));
            }
        }
        shell_words::split(&self.command)
            .map_err(|e| Error::InvalidArgument(format!("cannot parse external command: {e}")))?;
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "external timeout must be > 0, got {}",
                self.timeout_secs
            )));
        }
        if self.max_concurrent == 0 {
            return Err(Error::InvalidArgument("external max_concurrent must be >= 1".into()));
        }
        Ok(())
    }
}

/// What the backend is expected to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedOutput {
    Rgb8 { width: usize, height: usize },
    L16 { width: usize, height: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExternalImage {
    Color(ColorRaster),
    Height(HeightRaster),
}

static RUNNING: Mutex<usize> = Mutex::new(0);
static SLOT_FREED: Condvar = Condvar::new();

struct Slot;

impl Slot {
    fn acquire(cap: usize) -> Slot {
        let mut n = RUNNING.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= cap {
            n = SLOT_FREED.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Slot
    }
}

impl Drop for Slot {
    fn drop(&mut self) {
        let mut n = RUNNING.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        SLOT_FREED.notify_all();
    }
}

fn absolute(p: &Path) -> String {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()).display().to_string()
}

/// Runs the external command on files already written to `image_path` and
/// `mask_path`, then loads and checks `out_path`. Compositing is left to the
/// caller.
pub fn run_external_backend(
    params: &ExternalParams,
    image_path: &Path,
    mask_path: &Path,
    out_path: &Path,
    expected: ExpectedOutput,
) -> Result<ExternalImage> {
    params.validate()?;
    let (image, mask, out) = (absolute(image_path), absolute(mask_path), absolute(out_path));
    let argv: Vec<String> = shell_words::split(&params.command)
        .expect("validated")
        .into_iter()
        .map(|a| a.replace("{image}", &image).replace("{mask}", &mask).replace("{out}", &out))
        .collect();
    let Some((program, args)) = argv.split_first() else {
        return Err(Error::InvalidArgument("external command is empty".into()));
    };

    let _slot = Slot::acquire(params.max_concurrent);
    log::debug!("running external backend: {argv:?}");
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Backend {
            message: format!("cannot start `{program}`"),
            diagnostics: e.to_string(),
        })?;
    let mut stderr = child.stderr.take().expect("piped");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });

    let deadline = Instant::now() + Duration::from_secs_f64(params.timeout_secs);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                return Err(Error::Backend {
                    message: format!("cannot wait for `{program}`"),
                    diagnostics: e.to_string(),
                })
            }
        }
    };
    let Some(status) = status else {
        // Grandchildren may still hold stderr open; do not wait for them.
        return Err(Error::Backend {
            message: format!("`{program}` timed out after {} s", params.timeout_secs),
            diagnostics: "process killed".into(),
        });
    };
    let diagnostics = reader.join().unwrap_or_default();
    if !status.success() {
        return Err(Error::Backend {
            message: format!("`{program}` exited with {status}"),
            diagnostics,
        });
    }

    let img = image::open(out_path).map_err(|e| Error::Backend {
        message: format!("cannot read backend output {}", out_path.display()),
        diagnostics: e.to_string(),
    })?;
    check_output(img, expected, out_path)
}

fn check_output(img: DynamicImage, expected: ExpectedOutput, path: &Path) -> Result<ExternalImage> {
    let (w, h, want) = match expected {
        ExpectedOutput::Rgb8 { width, height } => (width, height, ColorType::Rgb8),
        ExpectedOutput::L16 { width, height } => (width, height, ColorType::L16),
    };
    let got = (img.width() as usize, img.height() as usize);
    if got != (w, h) {
        return Err(Error::Backend {
            message: format!(
                "backend output {} is {}x{}, expected {w}x{h}",
                path.display(),
                got.0,
                got.1
            ),
            diagnostics: String::new(),
        });
    }
    if img.color() != want {
        return Err(Error::Backend {
            message: format!(
                "backend output {} has pixel format {:?}, expected {want:?}",
                path.display(),
                img.color()
            ),
            diagnostics: String::new(),
        });
    }
    Ok(match expected {
        ExpectedOutput::Rgb8 { .. } => ExternalImage::Color(grid::rgb_image_to_raster(&img.into_rgb8())),
        ExpectedOutput::L16 { .. } => {
            let buf = img.into_luma16();
            ExternalImage::Height(crate::grid::Grid::from_vec(w, h, buf.into_raw())?)
        }
    })
}
