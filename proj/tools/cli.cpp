#include "cli.hpp"

#include "config.hpp"

#include "lrsgs/dataset.hpp"
#include "lrsgs/feature_extraction.hpp"
#include "lrsgs/io.hpp"
#include "lrsgs/lidar_model.hpp"
#include "lrsgs/losses.hpp"
#include "lrsgs/optimizer.hpp"
#include "lrsgs/rasterizer.hpp"
#include "lrsgs/synth_data.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace lrsgs::cli {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::NonFiniteLoss: return kExitNumerical;
    case ErrorCode::Config: return kExitUsage;
    default: return kExitData;
    }
}

/// The message without the "<code>: " prefix Error adds.
std::string bare_message(const Error& e) {
    const std::string prefix = std::string(to_string(e.code())) + ": ";
    std::string msg = e.what();
    if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
    return msg;
}

void configure_logging() {
    const char* env = std::getenv("LRSGS_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") {
        spdlog::set_level(spdlog::level::err);
    } else if (level == "info" || level.empty()) {
        spdlog::set_level(spdlog::level::info);
    } else if (level == "debug") {
        spdlog::set_level(spdlog::level::debug);
    } else {
        throw UsageError("LRSGS_LOG must be one of error, info, debug (got '" + level + "')");
    }
}

Config load_or_default(const std::string& path) {
    return path.empty() ? default_config() : load_config(path);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::uint64_t seed = 0;
    std::string out;
    int width = 64;
    int height = 48;
    int frames = 20;
    int samples = 3;
    double intensity_noise = 0.0;
    double range_noise = 0.0;
};

void add_synth(CLI::App& app, SynthArgs& a) {
    app.add_option("--seed", a.seed, "Scene and noise seed")->capture_default_str();
    app.add_option("--out", a.out, "Dataset directory to create")->required();
    app.add_option("--width", a.width, "Image width, pixels")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--height", a.height, "Image height, pixels")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--frames", a.frames, "Number of frames")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--samples", a.samples, "Supersamples per axis for ground-truth images")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_option("--intensity-noise", a.intensity_noise, "Gaussian sigma added to raw intensities")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    app.add_option("--range-noise", a.range_noise, "Gaussian sigma added to ranges, meters")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
}

int run_synth(const SynthArgs& a, std::ostream& out) {
    StandardSceneOptions so;
    so.width = a.width;
    so.height = a.height;
    so.frame_count = a.frames;
    const SynthScene scene = standard_scene(a.seed, so);
    SynthesisOptions opts;
    opts.samples = a.samples;
    opts.noise = {a.intensity_noise, a.range_noise, a.seed};
    const Dataset d = synthesize(scene, opts);
    write_dataset(a.out, d);
    std::size_t points = 0;
    for (const auto& s : d.sweeps) points += s.size();
    out << "wrote " << a.out << ": " << d.frame_count << " frames, " << d.cameras.size() << " cameras, " << points
        << " LiDAR returns\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

struct CalibrateArgs {
    std::string config;
    std::string input;
    std::string out;
    std::string camera;
    std::string sparse_out;
};

void add_calibrate(CLI::App& app, CalibrateArgs& a) {
    app.add_option("--config", a.config, "Config file (lidar_model section is used)");
    app.add_option("--input", a.input, "Sweep PLY")->required();
    app.add_option("--out", a.out, "Calibrated PLY to write")->required();
    app.add_option("--camera", a.camera, "Camera file (LiDAR frame -> camera) for sparse projections");
    app.add_option("--sparse-out", a.sparse_out, "Directory for reflectance.pfm and depth.pfm with masks")
        ->needs(app.get_option("--camera"));
}

int run_calibrate(const CalibrateArgs& a, std::ostream& out) {
    const Config cfg = load_or_default(a.config);
    const auto sweep = read_sweep_ply(a.input);
    const CalibrationResult r = calibrate_sweep(sweep, cfg.lidar_model);

    PlyTable t;
    auto col = [&](std::string name, PlyType type) -> std::vector<double>& {
        t.columns.push_back({std::move(name), type, {}});
        t.columns.back().values.reserve(r.points.size());
        return t.columns.back().values;
    };
    t.columns.reserve(7);
    auto& x = col("x", PlyType::Float32);
    auto& y = col("y", PlyType::Float32);
    auto& z = col("z", PlyType::Float32);
    auto& refl = col("reflectance", PlyType::Float32);
    auto& inc = col("incidence_cos", PlyType::Float32);
    auto& ring = col("ring", PlyType::UInt16);
    auto& az = col("azimuth_index", PlyType::UInt32);
    for (const auto& p : r.points) {
        x.push_back(p.position.x());
        y.push_back(p.position.y());
        z.push_back(p.position.z());
        refl.push_back(p.reflectance);
        inc.push_back(p.incidence_cos);
        ring.push_back(p.ring);
        az.push_back(p.azimuth_index);
    }
    write_ply(a.out, t);

    const auto& d = r.diagnostics;
    out << "input " << d.input_points << "  calibrated " << d.calibrated_points << "  degenerate "
        << d.degenerate_points << "  normalization " << d.normalization_scale << "\n";

    if (!a.sparse_out.empty()) {
        const CameraModel cam = read_camera(a.camera);
        const ProjectedSweep proj = project_to_camera(r.points, cam);
        ensure_dir(a.sparse_out);
        write_sparse(fs::path(a.sparse_out) / "reflectance.pfm", proj.reflectance);
        write_sparse(fs::path(a.sparse_out) / "depth.pfm", proj.depth);
        std::size_t valid = 0;
        for (auto v : proj.reflectance.valid) valid += v;
        out << "projected " << valid << " pixels into " << a.sparse_out << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

struct FeaturesArgs {
    std::string config;
    std::string input;
    std::string out;
};

void add_features(CLI::App& app, FeaturesArgs& a) {
    app.add_option("--config", a.config, "Config file (lidar_model and feature_extraction sections are used)");
    app.add_option("--input", a.input, "Sweep PLY")->required();
    app.add_option("--out", a.out, "Labeled PLY to write")->required();
}

int run_features(const FeaturesArgs& a, std::ostream& out) {
    const Config cfg = load_or_default(a.config);
    const auto sweep = read_sweep_ply(a.input);
    const CalibrationResult r = calibrate_sweep(sweep, cfg.lidar_model);
    const auto labels = classify_sweep(r.points, cfg.feature_extraction);

    PlyTable t;
    t.columns = {{"x", PlyType::Float32, {}},           {"y", PlyType::Float32, {}},
                 {"z", PlyType::Float32, {}},           {"reflectance", PlyType::Float32, {}},
                 {"ring", PlyType::UInt16, {}},         {"azimuth_index", PlyType::UInt32, {}},
                 {"label", PlyType::UInt8, {}},         {"smoothness", PlyType::Float32, {}},
                 {"refl_grad", PlyType::Float32, {}}};
    for (std::size_t i = 0; i < r.points.size(); ++i) {
        const auto& p = r.points[i];
        const double row[] = {p.position.x(),
                              p.position.y(),
                              p.position.z(),
                              p.reflectance,
                              static_cast<double>(p.ring),
                              static_cast<double>(p.azimuth_index),
                              static_cast<double>(labels[i].kind),
                              labels[i].smoothness,
                              labels[i].reflectance_gradient};
        for (std::size_t c = 0; c < t.columns.size(); ++c) t.columns[c].values.push_back(row[c]);
    }
    write_ply(a.out, t);

    const FeatureSummary s = summarize(r.points, labels);
    std::array<int, 4> total{};
    out << std::setw(6) << "ring" << std::setw(10) << "none" << std::setw(10) << "edge" << std::setw(10) << "planar"
        << std::setw(10) << "refl_edge" << "\n";
    for (std::size_t i = 0; i < s.rings.size(); ++i) {
        out << std::setw(6) << s.rings[i];
        for (int k = 0; k < 4; ++k) {
            out << std::setw(10) << s.counts[i][k];
            total[k] += s.counts[i][k];
        }
        out << "\n";
    }
    out << std::setw(6) << "total";
    for (int k = 0; k < 4; ++k) out << std::setw(10) << total[k];
    out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> iters;
    std::optional<int> threads;
    bool print_config = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
    app.add_option("--config", a.config, "Config file; flags below override it");
    app.add_option("--data", a.data, "Dataset directory written by synth");
    app.add_option("--out", a.out, "Run directory for checkpoints, journal and metrics");
    app.add_option("--seed", a.seed, "Training seed (default: train.seed = 0)");
    app.add_option("--iters", a.iters, "Iteration count (default: train.iterations = 7000)")
        ->check(CLI::PositiveNumber);
    app.add_option("--threads", a.threads, "Worker threads (default: hardware concurrency)")
        ->check(CLI::PositiveNumber);
    app.add_flag("--print-config", a.print_config, "Print the effective config as JSON and exit");
}

Config train_config(const TrainArgs& a) {
    Config cfg = load_or_default(a.config);
    if (a.seed) cfg.train.seed = *a.seed;
    if (a.iters) cfg.train.iterations = *a.iters;
    if (a.threads) cfg.train.threads = *a.threads;
    cfg.validate();
    return cfg;
}

int run_train(const TrainArgs& a, std::ostream& out) {
    const Config cfg = train_config(a);
    if (a.print_config) {
        out << to_json(cfg).dump(2) << "\n";
        return kExitOk;
    }
    if (a.data.empty() || a.out.empty()) throw UsageError("train needs --data and --out");

    const fs::path run_dir = a.out;
    ensure_dir(run_dir / "checkpoints");
    write_text(run_dir / "config.json", to_json(cfg).dump(2) + "\n");

    const Dataset dataset = read_dataset(a.data);
    const PreparedData data = prepare(dataset, cfg.prepare_config());
    spdlog::info("prepared {} training and {} held-out views, {} initial primitives", data.train.size(),
                 data.test.size(), data.scene.gaussian_count());

    std::ofstream journal(run_dir / "journal.jsonl");
    std::ofstream losses(run_dir / "losses.csv");
    if (!journal || !losses) throw Error(ErrorCode::Io, "cannot write into " + run_dir.string());
    losses << "iteration,frame,camera,total,rgb,depth,reflectance,reflectance_gradient,direction,magnitude,"
              "gaussians\n";
    losses << std::setprecision(9);

    TrainCallbacks cb;
    cb.mutation = [&](const MutationEvent& e) { journal << e.journal_line() << "\n"; };
    cb.progress = [&](const LossReport& r) {
        const auto& t = r.terms;
        losses << r.iteration << ',' << r.frame << ',' << r.camera << ',' << t.total << ',' << t.rgb << ','
               << t.depth << ',' << t.reflectance << ',' << t.reflectance_gradient << ',' << t.direction << ','
               << t.magnitude << ',' << r.gaussians << '\n';
    };
    cb.checkpoint = [&](int it, const SceneGraph& scene) {
        std::ostringstream name;
        name << "iter_" << std::setw(5) << std::setfill('0') << it << ".ckpt";
        save_checkpoint(run_dir / "checkpoints" / name.str(), scene);
    };

    const TrainResult result = train(data.scene, data, cfg.train, cfg.loss, cfg.densify, cb);
    save_checkpoint(run_dir / "scene.ckpt", result.scene);

    std::ofstream metrics(run_dir / "metrics.csv");
    if (!metrics) throw Error(ErrorCode::Io, "cannot write metrics.csv");
    metrics << "iteration,psnr,ssim,reflectance_rmse,gaussians\n" << std::setprecision(9);
    for (const auto& m : result.evaluations) {
        metrics << m.iteration << ',' << m.psnr << ',' << m.ssim << ',' << m.reflectance_rmse << ',' << m.gaussians
                << '\n';
    }
    if (!result.evaluations.empty()) {
        const auto& m = result.evaluations.back();
        out << "held-out psnr " << std::fixed << std::setprecision(3) << m.psnr << "  ssim " << std::setprecision(4)
            << m.ssim << "  reflectance rmse " << m.reflectance_rmse << "  gaussians " << m.gaussians << "\n";
    }
    out << "wrote " << (run_dir / "scene.ckpt").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

struct RenderArgs {
    std::string checkpoint;
    std::string out;
    std::string camera;
    int frame = 0;
    std::string data;
    std::string split = "test";
    std::optional<int> threads;
};

void add_render(CLI::App& app, RenderArgs& a) {
    app.add_option("--checkpoint", a.checkpoint, "Scene checkpoint")->required();
    app.add_option("--out", a.out, "Output directory")->required();
    auto* cam = app.add_option("--camera", a.camera, "Camera file (world -> camera)");
    app.add_option("--frame", a.frame, "Frame index for object poses")->capture_default_str();
    auto* data = app.add_option("--data", a.data, "Dataset directory; renders every view of --split");
    app.add_option("--split", a.split, "Views rendered with --data")
        ->capture_default_str()
        ->check(CLI::IsMember({"test", "train", "all"}));
    app.add_option("--threads", a.threads, "Worker threads (default: hardware concurrency)")
        ->check(CLI::PositiveNumber);
    cam->excludes(data);
}

void write_rendered(const fs::path& dir, const RenderedFrame& f) {
    ensure_dir(dir);
    write_png(dir / "color.png", f.color);
    write_pfm(dir / "depth.pfm", f.depth);
    write_pfm(dir / "reflectance.pfm", f.reflectance);
    write_pfm(dir / "mask.pfm", f.opacity);
}

int run_render(const RenderArgs& a, std::ostream& out) {
    if (a.camera.empty() == a.data.empty()) throw UsageError("render needs exactly one of --camera or --data");
    const SceneGraph scene = load_checkpoint(a.checkpoint);
    RenderOptions opts;
    opts.threads = a.threads ? *a.threads : default_config().train.threads;

    auto draw = [&](const CameraModel& cam, int frame) {
        if (frame < 0 || frame >= scene.frame_count) {
            throw Error(ErrorCode::FrameOutOfRange, "frame " + std::to_string(frame) + " outside [0, " +
                                                        std::to_string(scene.frame_count) + ")");
        }
        return render(world_gaussians(scene, frame), cam, scene.sky, scene.sh_degree, opts);
    };

    if (!a.camera.empty()) {
        write_rendered(a.out, draw(read_camera(a.camera), a.frame));
        out << "wrote " << a.out << "\n";
        return kExitOk;
    }
    const Dataset d = read_dataset(a.data);
    int views = 0;
    for (int f = 0; f < d.frame_count; ++f) {
        for (const auto& c : d.cameras) {
            if ((a.split == "test" && !c.held_out) || (a.split == "train" && c.held_out)) continue;
            write_rendered(fs::path(a.out) / frame_dir(f) / c.name, draw(c.model, f));
            ++views;
        }
    }
    out << "wrote " << views << " views to " << a.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string rendered;
    std::string gt;
    std::string csv;
    std::string config;
};

void add_eval(CLI::App& app, EvalArgs& a) {
    app.add_option("--rendered", a.rendered, "Directory of rendered views (each with color.png)")->required();
    app.add_option("--gt", a.gt,
                   "Dataset directory, or a directory mirroring --rendered with color.png and optional "
                   "reflectance.pfm (+ mask)")
        ->required();
    app.add_option("--csv", a.csv, "CSV output (default: <rendered>/eval.csv)");
    app.add_option("--config", a.config, "Config used to build LiDAR reflectance targets from a dataset");
}

struct GroundTruth {
    Image rgb;
    std::optional<SparseImage> reflectance;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
    const fs::path rendered_root = a.rendered;
    const fs::path gt_root = a.gt;
    std::vector<fs::path> views;
    if (!fs::is_directory(rendered_root)) throw Error(ErrorCode::Io, "not a directory: " + a.rendered);
    for (const auto& e : fs::recursive_directory_iterator(rendered_root)) {
        if (e.is_regular_file() && e.path().filename() == "color.png") {
            views.push_back(fs::relative(e.path().parent_path(), rendered_root));
        }
    }
    std::sort(views.begin(), views.end());
    if (views.empty()) throw Error(ErrorCode::EmptyInput, "no color.png under " + a.rendered);

    // Dataset ground truth: images from disk, reflectance from the projected LiDAR sweeps.
    std::optional<Dataset> dataset;
    std::map<std::pair<int, int>, const View*> targets;
    PreparedData prepared;
    if (fs::exists(gt_root / "manifest.json")) {
        dataset = read_dataset(gt_root);
        prepared = prepare(*dataset, load_or_default(a.config).prepare_config());
        for (const auto* list : {&prepared.train, &prepared.test}) {
            for (const auto& v : *list) targets[{v.frame, v.camera}] = &v;
        }
    }

    auto ground_truth = [&](const fs::path& rel) {
        GroundTruth gt;
        if (!dataset) {
            gt.rgb = read_png(gt_root / rel / "color.png");
            if (fs::exists(gt_root / rel / "reflectance.pfm")) gt.reflectance = read_sparse(gt_root / rel / "reflectance.pfm");
            return gt;
        }
        const std::string cam = rel.filename().string();
        const std::string fdir = rel.parent_path().filename().string();
        int frame = -1;
        try {
            std::size_t used = 0;
            frame = std::stoi(fdir, &used);
            if (used != fdir.size()) frame = -1;
        } catch (const std::exception&) {
        }
        int camera = -1;
        for (std::size_t c = 0; c < dataset->cameras.size(); ++c) {
            if (dataset->cameras[c].name == cam) camera = static_cast<int>(c);
        }
        if (frame < 0 || frame >= dataset->frame_count || camera < 0) {
            throw Error(ErrorCode::Format, "rendered view " + rel.string() + " does not name a dataset frame/camera");
        }
        gt.rgb = dataset->images[static_cast<std::size_t>(frame)][static_cast<std::size_t>(camera)];
        gt.reflectance = targets.at({frame, camera})->lidar.reflectance;
        return gt;
    };

    struct Row {
        std::string view;
        double psnr, ssim, rmse;
        std::size_t pixels;
    };
    std::vector<Row> rows;
    double sq_sum = 0.0;
    std::size_t sq_count = 0;
    for (const auto& rel : views) {
        const Image rgb = read_png(rendered_root / rel / "color.png");
        const GroundTruth gt = ground_truth(rel);
        Row row{rel.generic_string(), 0.0, 0.0, std::nan(""), 0};
        const fs::path refl_path = rendered_root / rel / "reflectance.pfm";
        if (gt.reflectance && fs::exists(refl_path)) {
            const Metrics m = metrics(rgb, gt.rgb, read_pfm(refl_path), *gt.reflectance);
            row.psnr = m.psnr;
            row.ssim = m.ssim;
            row.pixels = m.reflectance_pixels;
            if (m.reflectance_pixels) {
                row.rmse = m.reflectance_rmse;
                sq_sum += m.reflectance_rmse * m.reflectance_rmse * static_cast<double>(m.reflectance_pixels);
                sq_count += m.reflectance_pixels;
            }
        } else {
            row.psnr = psnr(rgb, gt.rgb);
            row.ssim = ssim(rgb, gt.rgb);
        }
        rows.push_back(row);
    }

    double psnr_mean = 0.0, ssim_mean = 0.0;
    for (const auto& r : rows) {
        psnr_mean += r.psnr / static_cast<double>(rows.size());
        ssim_mean += r.ssim / static_cast<double>(rows.size());
    }
    const double rmse_pooled = sq_count ? std::sqrt(sq_sum / static_cast<double>(sq_count)) : std::nan("");
    rows.push_back({"mean", psnr_mean, ssim_mean, rmse_pooled, sq_count});

    std::size_t width = 4;
    for (const auto& r : rows) width = std::max(width, r.view.size());
    auto fmt = [](double v, int prec) {
        if (std::isnan(v)) return std::string("-");
        std::ostringstream s;
        s << std::fixed << std::setprecision(prec) << v;
        return s.str();
    };
    out << std::left << std::setw(static_cast<int>(width)) << "view" << std::right << std::setw(10) << "psnr"
        << std::setw(9) << "ssim" << std::setw(11) << "refl_rmse" << std::setw(9) << "pixels" << "\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(static_cast<int>(width)) << r.view << std::right << std::setw(10)
            << fmt(r.psnr, 3) << std::setw(9) << fmt(r.ssim, 4) << std::setw(11) << fmt(r.rmse, 4) << std::setw(9)
            << r.pixels << "\n";
    }

    const fs::path csv_path = a.csv.empty() ? rendered_root / "eval.csv" : fs::path(a.csv);
    std::ofstream csv(csv_path);
    if (!csv) throw Error(ErrorCode::Io, "cannot write " + csv_path.string());
    csv << "view,psnr,ssim,reflectance_rmse,reflectance_pixels\n" << std::setprecision(9);
    for (const auto& r : rows) {
        csv << r.view << ',' << r.psnr << ',' << r.ssim << ',';
        if (!std::isnan(r.rmse)) csv << r.rmse;
        csv << ',' << r.pixels << '\n';
    }
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Reflectance-guided salient Gaussian splatting on LiDAR + camera data", "lrsgs"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    SynthArgs synth_args;
    CalibrateArgs calibrate_args;
    FeaturesArgs features_args;
    TrainArgs train_args;
    RenderArgs render_args;
    EvalArgs eval_args;
    auto* synth = app.add_subcommand("synth", "Write the standard synthetic dataset");
    auto* calibrate = app.add_subcommand("calibrate", "Turn raw intensities of one sweep into reflectance");
    auto* features = app.add_subcommand("features", "Label edge, planar and reflectance-edge points of one sweep");
    auto* train = app.add_subcommand("train", "Optimize a scene on a dataset");
    auto* render = app.add_subcommand("render", "Render color, depth, reflectance and opacity from a checkpoint");
    auto* eval = app.add_subcommand("eval", "PSNR, SSIM and reflectance RMSE of rendered views");
    add_synth(*synth, synth_args);
    add_calibrate(*calibrate, calibrate_args);
    add_features(*features, features_args);
    add_train(*train, train_args);
    add_render(*render, render_args);
    add_eval(*eval, eval_args);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        const CLI::App* sub = &app;
        for (const auto* s : app.get_subcommands()) sub = s;
        out << sub->help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "ERROR[Usage]: " << e.what() << "\n";
        // Help of the innermost subcommand that was reached.
        const CLI::App* sub = &app;
        for (const auto* s : app.get_subcommands()) sub = s;
        err << sub->help();
        return kExitUsage;
    }

    try {
        configure_logging();
        if (*synth) return run_synth(synth_args, out);
        if (*calibrate) return run_calibrate(calibrate_args, out);
        if (*features) return run_features(features_args, out);
        if (*train) return run_train(train_args, out);
        if (*render) return run_render(render_args, out);
        if (*eval) return run_eval(eval_args, out);
    } catch (const UsageError& e) {
        err << "ERROR[Usage]: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "ERROR[" << to_string(e.code()) << "]: " << bare_message(e) << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "ERROR[Internal]: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

} // namespace lrsgs::cli
