use percept_core::data::{standin_photo, synthetic, SynthKind};
use percept_core::image::{resize_nearest, save_image, save_rgb, LoadedImage};
use percept_core::losses::{psnr, LossFunction, LossKind, Psnr};
use percept_core::metrics::MetricParams;
use percept_core::nn::{Init, LayerSpec, Network, OptimizerConfig, Shape};
use percept_core::sr::{
    emit_report, evaluate_dir, evaluate_images, evaluate_image, make_lr, render_csv,
    render_markdown, train_sr, upscale_bicubic, EvalOptions, ReportFormat, SrMethod, SrModel,
    CSV_HEADER,
};
use percept_core::{Image, PixelRange};

fn photos(n: usize) -> Vec<(String, LoadedImage)> {
    (0..n)
        .map(|i| (format!("img{i}.png"), LoadedImage::Rgb(standin_photo(96, 5, i))))
        .collect()
}

#[test]
fn bicubic_round_trip_beats_nearest() {
    for (_, img) in photos(3) {
        let y = percept_core::sr::to_y(&img, Default::default());
        let bic = upscale_bicubic(&make_lr(&y, 2).unwrap(), 2).unwrap();
        let near_lr = resize_nearest(&y, 48, 48);
        let near = resize_nearest(&near_lr, 96, 96);
        let pb = psnr(&y, &bic, 1.0).unwrap().finite().unwrap();
        let pn = psnr(&y, &near, 1.0).unwrap().finite().unwrap();
        assert!(pb > pn, "{pb} <= {pn}");
    }
}

#[test]
fn ground_truth_rows_and_duplicate_images() {
    let mut imgs = photos(1);
    imgs.push(("copy.png".into(), imgs[0].1.clone()));
    let r = evaluate_images(&imgs, &[SrMethod::GroundTruth, SrMethod::Bicubic], &EvalOptions::new(4)).unwrap();
    assert_eq!(r.rows.len(), 4);
    // Sorted by name: copy.png before img0.png.
    assert_eq!(r.rows[0].name, "copy.png");
    let gt = &r.rows[0];
    assert_eq!(gt.psnr, Psnr::Infinite);
    assert_eq!(gt.ssim, 1.0);
    let strip = |k: usize| {
        let mut row = r.rows[k].clone();
        row.name.clear();
        row
    };
    assert_eq!(strip(0), strip(2));
    assert_eq!(strip(1), strip(3));
    assert!(r.rows[1].ssim < 1.0);
    assert_eq!(r.rows[1].border, 4);
}

#[test]
fn aggregates_are_row_means() {
    let r = evaluate_images(&photos(4), &[SrMethod::Bicubic, SrMethod::Nearest], &EvalOptions::new(3)).unwrap();
    for s in r.summaries() {
        let rows: Vec<_> = r.rows.iter().filter(|x| x.method == s.method).collect();
        let psnr_mean = rows.iter().map(|x| x.psnr.finite().unwrap()).sum::<f64>() / rows.len() as f64;
        let ssim_mean = rows.iter().map(|x| x.ssim).sum::<f64>() / rows.len() as f64;
        assert!((s.psnr_db - psnr_mean).abs() < 1e-9);
        assert!((s.ssim - ssim_mean).abs() < 1e-9);
        assert!(s.ssim < 1.0);
    }
    let bic = r.summary("bicubic").unwrap();
    assert!(bic.psnr_db > r.summary("nearest").unwrap().psnr_db);
}

#[test]
fn reports_are_deterministic_and_parse_back() {
    let r = evaluate_images(&photos(2), &[SrMethod::Bicubic, SrMethod::GroundTruth], &EvalOptions::new(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    emit_report(&r, ReportFormat::Csv, &a).unwrap();
    emit_report(&r, ReportFormat::Csv, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let mut rd = csv::Reader::from_path(&a).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.join(","), CSV_HEADER);
    let recs: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(recs.len(), r.rows.len());
    for (rec, row) in recs.iter().zip(&r.rows) {
        assert_eq!(&rec[0], row.name);
        assert_eq!(&rec[1], row.method);
        assert_eq!(rec[2].parse::<usize>().unwrap(), row.scale);
        assert_eq!(rec[3].parse::<usize>().unwrap(), row.border);
        match row.psnr {
            Psnr::Infinite => assert_eq!(&rec[4], "inf"),
            Psnr::Finite(v) => assert!((rec[4].parse::<f64>().unwrap() - v).abs() <= 1e-5 * v.abs()),
        }
        assert!((rec[5].parse::<f64>().unwrap() - row.ssim).abs() <= 1e-5);
    }

    let md = render_markdown(&r);
    assert_eq!(md, render_markdown(&r));
    assert!(md.starts_with("| Metric | Bicubic | Ground truth |"));
    assert!(md.contains("| PSNR (dB) |"));
}

#[test]
fn empty_method_list_gives_header_only() {
    let r = evaluate_images(&photos(1), &[], &EvalOptions::new(2)).unwrap();
    assert_eq!(render_csv(&r), format!("{CSV_HEADER}\n"));
    assert_eq!(render_markdown(&r), "| Metric |\n| --- |\n");
}

#[test]
fn directory_evaluation_skips_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    save_rgb(&standin_photo(64, 2, 0), dir.path().join("b.png")).unwrap();
    save_image(
        &Image::constant(64, 64, 0.5, PixelRange::Unit),
        dir.path().join("a.pgm"),
    )
    .unwrap();
    std::fs::write(dir.path().join("c.png"), b"not a png").unwrap();
    let mut skipped = Vec::new();
    let r = evaluate_dir(dir.path(), &[SrMethod::Bicubic], &EvalOptions::new(4), &mut |p, _| {
        skipped.push(p.to_path_buf())
    })
    .unwrap();
    assert_eq!(r.skipped, 1);
    assert_eq!(skipped.len(), 1);
    let names: Vec<_> = r.rows.iter().map(|x| x.name.as_str()).collect();
    assert_eq!(names, ["a.pgm", "b.png"]);

    let empty = tempfile::tempdir().unwrap();
    assert!(evaluate_dir(empty.path(), &[SrMethod::Bicubic], &EvalOptions::new(4), &mut |_, _| {}).is_err());
}

#[test]
fn toy_model_is_not_worse_than_bicubic() {
    let to_img = |f| Image::from_field(f, PixelRange::Unit).unwrap();
    let train: Vec<Image> = synthetic(SynthKind::Edges, 48, 32, 1).into_iter().map(to_img).collect();
    let held: Vec<Image> = synthetic(SynthKind::Edges, 12, 32, 2).into_iter().map(to_img).collect();
    let specs = [LayerSpec::conv(8, 5, 1), LayerSpec::relu(), LayerSpec::conv(1, 3, 1)];
    let mut model = SrModel {
        net: Network::new(&specs, Shape::new(1, 32, 32), Init::SRCNN, 3).unwrap(),
        residual: true,
    };
    let loss = LossFunction::new(LossKind::Mse, MetricParams::ssim_default());
    let opt = OptimizerConfig::adam(1e-3).with_batch_size(4);
    let hist = train_sr(&mut model, &loss, &train, 2, 200, &opt, 4).unwrap();
    assert_eq!(hist.len(), 200);
    let methods = [
        SrMethod::Bicubic,
        SrMethod::Model {
            name: "toy".into(),
            model,
        },
    ];
    let opts = EvalOptions::new(2);
    let mut bic = 0.0;
    let mut toy = 0.0;
    for (i, img) in held.iter().enumerate() {
        let rows = evaluate_image(&format!("{i}"), img, &methods, &opts).unwrap();
        bic += rows[0].psnr.finite().unwrap();
        toy += rows[1].psnr.finite().unwrap();
    }
    let n = held.len() as f64;
    assert!(toy / n >= bic / n - 0.1, "toy {} vs bicubic {}", toy / n, bic / n);
}
