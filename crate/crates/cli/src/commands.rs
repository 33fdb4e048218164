use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dirdet::annotations::{parse_annotations, parse_detections, write_records, LabeledRecord};
use dirdet::eval::build_images;
use dirdet::nms::directed_nms_batch;
use dirdet::synth::{generate_scene, perturb, PerturbConfig, SceneConfig};
use dirdet::{
    box_dir_corr, dir_iou, evaluate, rotated_iou, Angle, ClassId, ClassTable, Detection, DirectedBox, Execution,
};

use crate::args::{CommonArgs, CurveArgs, EvalArgs, GenArgs, IouArgs, NmsArgs};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(usage(format!("{name} must be in [0, 1], got {v}")))
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn io_at(path: Option<&Path>) -> impl Fn(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_owned),
        source,
    }
}

/// Runs `write` against `path`, or stdout when `path` is `None`.
fn with_output<F>(path: Option<&Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let mut w = create(p)?;
            write(&mut w)?;
            w.flush().map_err(io_at(path))
        }
        None => {
            let mut w = io::stdout().lock();
            write(&mut w)?;
            w.flush().map_err(io_at(path))
        }
    }
}

fn with_path(path: &Path) -> impl Fn(dirdet::Error) -> CliError + '_ {
    move |source| CliError::Input {
        path: path.to_owned(),
        source,
    }
}

fn load_classes(path: Option<&Path>) -> Result<ClassTable> {
    match path {
        Some(p) => ClassTable::load(p).map_err(with_path(p)),
        None => Ok(ClassTable::default()),
    }
}

/// Execution policy plus the pool to run it on.
fn pool(threads: usize) -> Result<Option<rayon::ThreadPool>> {
    match threads {
        0 => Err(usage("--threads must be at least 1")),
        1 => Ok(None),
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Some)
            .map_err(|e| usage(format!("cannot start {n} worker threads: {e}"))),
    }
}

fn run_pooled<T: Send>(threads: usize, f: impl FnOnce(Execution) -> T + Send) -> Result<T> {
    Ok(match pool(threads)? {
        Some(p) => p.install(|| f(Execution::Parallel)),
        None => f(Execution::Sequential),
    })
}

fn parse_box(text: &str) -> Result<DirectedBox> {
    let fields = text
        .split(',')
        .map(|f| f.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| usage(format!("box '{text}': {e}")))?;
    let (theta, dims) = match fields.as_slice() {
        [cx, cy, w, h] => (None, [*cx, *cy, *w, *h]),
        [cx, cy, w, h, t] => (Some(Angle::new(*t)?), [*cx, *cy, *w, *h]),
        _ => return Err(usage(format!("box '{text}': expected cx,cy,w,h[,theta]"))),
    };
    Ok(DirectedBox::new(dims[0], dims[1], dims[2], dims[3], theta)?)
}

pub fn iou(a: &IouArgs) -> Result<()> {
    let (ba, bb) = (parse_box(&a.box_a)?, parse_box(&a.box_b)?);
    let line = format!(
        "{:.6} {:.6} {:.6}\n",
        rotated_iou(&ba, &bb),
        box_dir_corr(&ba, &bb),
        dir_iou(&ba, &bb)
    );
    with_output(None, |w| w.write_all(line.as_bytes()).map_err(io_at(None)))
}

pub fn curve(a: &CurveArgs) -> Result<()> {
    let steps = 360.0 / a.step;
    if !(a.step > 0.0 && (steps - steps.round()).abs() < 1e-9) {
        return Err(usage(format!("--step {} does not divide 360", a.step)));
    }
    let steps = steps.round() as u32;
    let base = DirectedBox::directed(0.0, 0.0, a.w, a.h, 0.0)?;
    let mut rows = String::from("delta_deg,iou,dir_corr,dir_iou\n");
    for k in 0..=steps {
        let deg = f64::from(k) * a.step;
        let other = base.with_theta(Some(dirdet::wrap_angle(deg.to_radians())?));
        rows.push_str(&format!(
            "{deg:.6},{:.6},{:.6},{:.6}\n",
            rotated_iou(&base, &other),
            box_dir_corr(&base, &other),
            dir_iou(&base, &other)
        ));
    }
    let out = a.output.as_deref();
    with_output(out, |w| w.write_all(rows.as_bytes()).map_err(io_at(out)))
}

fn read_detections(path: &Path, table: &ClassTable, common: &CommonArgs) -> Result<Vec<LabeledRecord>> {
    parse_detections(open(path)?, table, common.lenient).map_err(with_path(path))
}

pub fn nms(a: &NmsArgs) -> Result<()> {
    check_unit("--dir-iou-thresh", a.dir_iou_thresh)?;
    check_unit("--score-thresh", a.score_thresh)?;
    pool(a.common.threads)?;
    let table = load_classes(a.common.classes.as_deref())?;
    let records = read_detections(&a.detections, &table, &a.common)?;

    let groups = dirdet::annotations::group_by_image(&records);
    let mut images = Vec::with_capacity(groups.len());
    let mut batches = Vec::with_capacity(groups.len());
    for (image, recs) in groups {
        let dets = recs
            .iter()
            .map(|(i, r)| Detection::from_record(r, &table, *i))
            .collect::<dirdet::Result<Vec<_>>>()
            .map_err(with_path(&a.detections))?;
        images.push(image.to_owned());
        batches.push(dets);
    }
    let kept = run_pooled(a.common.threads, |exec| {
        directed_nms_batch(&batches, a.dir_iou_thresh, a.score_thresh, exec)
    })??;

    let out = a.output.as_deref();
    with_output(out, |w| {
        for (image, dets) in images.iter().zip(&kept) {
            let recs: Vec<_> = dets.iter().map(|d| d.to_record(image)).collect();
            write_records(w, &recs)?;
        }
        Ok(())
    })
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    check_unit("--dir-iou-thresh", a.dir_iou_thresh)?;
    pool(a.common.threads)?;
    let table = load_classes(a.common.classes.as_deref())?;
    let gts =
        parse_annotations(open(&a.ground_truth)?, &table, a.common.lenient).map_err(with_path(&a.ground_truth))?;
    let dets = read_detections(&a.detections, &table, &a.common)?;
    let images = build_images(&gts, &dets, &table)?;
    let report = run_pooled(a.common.threads, |exec| {
        evaluate(&images, a.dir_iou_thresh, &table, exec)
    })??;

    if let Some(path) = a.output.as_deref() {
        with_output(Some(path), |w| {
            serde_json::to_writer_pretty(&mut *w, &report).map_err(dirdet::Error::from)?;
            w.write_all(b"\n").map_err(io_at(Some(path)))
        })?;
    }
    let table_text = report.to_table();
    with_output(None, |w| w.write_all(table_text.as_bytes()).map_err(io_at(None)))
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let table = load_classes(a.classes.as_deref())?;
    let counts: Vec<(ClassId, usize)> = match a.count {
        Some(n) => table.specs().iter().map(|s| (s.id, n)).collect(),
        None => vec![(ClassId::BEE, a.bees), (ClassId::ABDOMEN, a.abdomens)],
    };
    let noise = PerturbConfig {
        center_sigma: a.center_noise,
        angle_sigma: a.angle_noise,
        fp_rate: a.fp_rate,
        fn_rate: a.fn_rate,
        ..Default::default()
    };
    noise.validate()?;
    if !a.output.is_dir() {
        return Err(CliError::Io {
            path: a.output.clone(),
            source: io::Error::new(io::ErrorKind::NotFound, "output directory does not exist"),
        });
    }

    let mut gt_lines = Vec::new();
    let mut det_lines = Vec::new();
    for i in 0..a.images {
        let seed = a.seed.wrapping_add(i);
        let image = format!("seed_{seed}");
        let scene = SceneConfig {
            image_size: a.image_size,
            counts: counts.clone(),
            min_separation: a.separation,
            seed,
            max_attempts: a.max_attempts,
        };
        let gts = generate_scene(&scene, &table)?;
        let dets = perturb(&gts, &PerturbConfig { seed, ..noise.clone() }, a.image_size, &table)?;
        gt_lines.extend(gts.iter().map(|(b, class)| LabeledRecord {
            image: image.clone(),
            record: dirdet::AnnotationRecord {
                x: b.cx(),
                y: b.cy(),
                class: *class,
                theta: b.theta(),
            },
            score: None,
        }));
        det_lines.extend(dets.iter().map(|d| d.to_record(&image)));
    }

    for (name, lines) in [("gt.jsonl", &gt_lines), ("det.jsonl", &det_lines)] {
        let path = a.output.join(name);
        with_output(Some(&path), |w| Ok(write_records(w, lines.iter())?))?;
    }
    Ok(())
}
