#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dect/common.hpp"
#include "dect/forward_model.hpp"
#include "dect/metrics.hpp"
#include "dect/parallel.hpp"
#include "dect/phantom.hpp"
#include "dect/physics.hpp"
#include "dect/recon_baseline.hpp"
#include "dect/rng.hpp"
#include "dect/scenario.hpp"
#include "dect/sha256.hpp"
#include "dect/sir.hpp"
#include "dect/tensor.hpp"
#include "dect/unroll.hpp"

namespace {

using namespace dect;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    }
};

struct GlobalOpts {
    std::size_t threads = 0;
    bool deterministic = false;
};

void apply_globals(const GlobalOpts& g) {
    if (g.deterministic) {
        set_deterministic(true);
        set_max_threads(1);
    } else if (g.threads > 0) {
        set_max_threads(g.threads);
    }
}

RunManifest start_manifest(const std::string& command, const GlobalOpts& g) {
    RunManifest man;
    man.command = command;
    man.threads = max_threads();
    man.deterministic = g.deterministic;
    return man;
}

void add_input(RunManifest& man, const std::string& path) {
    man.inputs.emplace_back(path, sha256_file_hex(path));
}

void add_output(RunManifest& man, const std::string& path) {
    man.outputs.emplace_back(path, sha256_file_hex(path));
}

// "fbp", "zero", or a saved image path.
BasisImage initial_image(const std::string& init, const SinogramPair& d,
                         const ScanModel& m, RunManifest& man) {
    if (init == "fbp")
        return fbp_init(d, m);
    if (init == "zero")
        return BasisImage(m.geometry.n_x, m.geometry.n_y, m.geometry.pixel_size_cm);
    add_input(man, init);
    return load_image(init, m.geometry);
}

FilterWindow parse_window(const std::string& w) {
    if (w == "hann")
        return FilterWindow::hann;
    if (w == "ram-lak")
        return FilterWindow::ram_lak;
    throw Error(ErrorKind::config, "--window: expected 'hann' or 'ram-lak', got '" + w + "'");
}

PenaltyConfig parse_penalty(const std::string& kind, double beta, double delta) {
    PenaltyConfig pen;
    if (kind == "none")
        pen.kind = PenaltyKind::none;
    else if (kind == "quad")
        pen.kind = PenaltyKind::quadratic_difference;
    else if (kind == "huber")
        pen.kind = PenaltyKind::huber;
    else
        throw Error(ErrorKind::config,
                    "--penalty: expected 'none', 'quad', or 'huber', got '" + kind + "'");
    pen.weight = beta;
    pen.huber_delta = delta;
    pen.validate();
    return pen;
}

void write_trace_csv(const std::string& path, const std::vector<double>& trace) {
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::io, "cannot open '" + path + "'", IoCode::open_failed);
    out << "# iteration,objective\n";
    char buf[48];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, trace[i]);
        out << buf;
    }
    if (!out)
        throw Error(ErrorKind::io, "write to '" + path + "' failed", IoCode::write_failed);
}

std::vector<double> parse_energies(const std::string& spec) {
    std::vector<double> out;
    if (spec.find(':') != std::string::npos) {
        double lo, hi, step;
        if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0.0 ||
            hi < lo)
            throw Error(ErrorKind::config,
                        "--energies: expected 'lo:hi:step' with step > 0, got '" + spec + "'");
        for (double e = lo; e <= hi + 1e-9; e += step)
            out.push_back(e);
        return out;
    }
    std::size_t pos = 0;
    while (pos < spec.size()) {
        std::size_t comma = spec.find(',', pos);
        if (comma == std::string::npos)
            comma = spec.size();
        try {
            out.push_back(std::stod(spec.substr(pos, comma - pos)));
        } catch (const std::exception&) {
            throw Error(ErrorKind::config, "--energies: bad number in '" + spec + "'");
        }
        pos = comma + 1;
    }
    if (out.empty())
        throw Error(ErrorKind::config, "--energies: empty list");
    return out;
}

// ---------------------------------------------------------------------------
// phantom

int cmd_phantom(const GlobalOpts& g, const std::string& spec_path, std::size_t nx,
                std::size_t ny, const std::string& out) {
    Timer timer;
    RunManifest man = start_manifest("phantom", g);
    add_input(man, spec_path);
    PhantomSpec spec = load_phantom_spec(spec_path);
    BasisImage img = rasterize(spec, nx, ny == 0 ? nx : ny);
    save_image(out, img);
    add_output(man, out);
    man.wall_seconds = timer.seconds();
    write_manifest(out + ".manifest.json", man);
    std::printf("phantom: %zux%zu image -> %s\n", img.n_x, img.n_y, out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const GlobalOpts& g, const std::string& scenario_path,
                 const std::string& phantom_path, std::uint64_t seed, bool noiseless,
                 const std::string& out) {
    Timer timer;
    RunManifest man = start_manifest("simulate", g);
    man.seed = seed;
    add_input(man, scenario_path);
    add_input(man, phantom_path);
    Scenario sc = load_scenario(scenario_path);
    ScanModel m = build_scan_model(sc);
    BasisImage img = load_image(phantom_path, sc.geometry);
    SinogramPair mean = predict(img, m);
    SinogramPair d = noiseless ? mean : simulate(mean, seed);
    save_sinograms(out, d);
    add_output(man, out);
    man.wall_seconds = timer.seconds();
    write_manifest(out + ".manifest.json", man);
    std::printf("simulate: %zu angles x %zu det%s -> %s\n", d.low.n_angles, d.low.n_det,
                noiseless ? " (noiseless)" : "", out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// recon

int cmd_recon_fbp(const GlobalOpts& g, const std::string& scenario_path,
                  const std::string& data_path, const std::string& window,
                  const std::string& out) {
    Timer timer;
    RunManifest man = start_manifest("recon fbp", g);
    add_input(man, scenario_path);
    add_input(man, data_path);
    Scenario sc = load_scenario(scenario_path);
    ScanModel m = build_scan_model(sc);
    SinogramPair d = load_sinograms(data_path, sc.geometry);
    BasisImage img = fbp_init(d, m, parse_window(window));
    save_image(out, img);
    add_output(man, out);
    man.wall_seconds = timer.seconds();
    write_manifest(out + ".manifest.json", man);
    std::printf("recon fbp: -> %s\n", out.c_str());
    return 0;
}

int cmd_recon_sir(const GlobalOpts& g, const std::string& scenario_path,
                  const std::string& data_path, const std::string& init,
                  std::size_t iters, double beta, const std::string& penalty,
                  double huber_delta, double step_scale, bool nonneg,
                  const std::string& curvature, const std::string& trace_out,
                  const std::string& out) {
    Timer timer;
    RunManifest man = start_manifest("recon sir", g);
    add_input(man, scenario_path);
    add_input(man, data_path);
    Scenario sc = load_scenario(scenario_path);
    ScanModel m = build_scan_model(sc);
    SinogramPair d = load_sinograms(data_path, sc.geometry);

    SurrogateConfig cfg;
    cfg.step_scale = step_scale;
    cfg.nonnegativity = nonneg;
    if (curvature == "periter")
        cfg.curvature_mode = CurvatureMode::per_iterate;
    else if (curvature == "precomputed")
        cfg.curvature_mode = CurvatureMode::precomputed_bound;
    else
        throw Error(ErrorKind::config,
                    "--curvature: expected 'periter' or 'precomputed', got '" + curvature +
                        "'");
    PenaltyConfig pen = parse_penalty(penalty, beta, huber_delta);

    BasisImage c0 = initial_image(init, d, m, man);
    SirResult res = sir_reconstruct(d, c0, m, iters, cfg, pen);
    save_image(out, res.image);
    add_output(man, out);
    if (!trace_out.empty()) {
        write_trace_csv(trace_out, res.trace);
        add_output(man, trace_out);
    }
    man.wall_seconds = timer.seconds();
    write_manifest(out + ".manifest.json", man);
    std::printf("recon sir: %zu iters, objective %.6f -> %.6f, %s\n", iters,
                res.trace.front(), res.trace.back(), out.c_str());
    return 0;
}

int cmd_recon_unrolled(const GlobalOpts& g, const std::string& scenario_path,
                       const std::string& data_path, const std::string& net_path,
                       const std::string& init, const std::string& out) {
    Timer timer;
    RunManifest man = start_manifest("recon unrolled", g);
    add_input(man, scenario_path);
    add_input(man, data_path);
    add_input(man, net_path);
    Scenario sc = load_scenario(scenario_path);
    ScanModel m = build_scan_model(sc);
    SinogramPair d = load_sinograms(data_path, sc.geometry);
    UnrolledNet net = load_net(net_path);
    BasisImage c0 = initial_image(init, d, m, man);

    Timer infer_timer;
    InferResult res = infer(d, c0, net, m);
    const double infer_seconds = infer_timer.seconds();

    save_image(out, res.output);
    add_output(man, out);
    man.wall_seconds = timer.seconds();
    write_manifest(out + ".manifest.json", man);
    std::printf("recon unrolled: %zu blocks in %.3f s -> %s\n", net.n_blocks(),
                infer_seconds, out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// train

std::vector<TrainSample> load_dataset_dir(const std::string& dir, const Geometry& geom,
                                          RunManifest& man) {
    std::vector<TrainSample> data;
    for (std::size_t k = 0;; ++k) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "sample_%04zu", k);
        const std::string base = (std::filesystem::path(dir) / stem).string();
        const std::string truth = base + ".truth.dt64";
        const std::string counts = base + ".data.dt64";
        const std::string init = base + ".init.dt64";
        if (!std::filesystem::exists(truth))
            break;
        add_input(man, truth);
        add_input(man, counts);
        add_input(man, init);
        TrainSample s;
        s.c_truth = load_image(truth, geom);
        s.d = load_sinograms(counts, geom);
        s.c_init = load_image(init, geom);
        data.push_back(std::move(s));
    }
    if (data.empty())
        throw Error(ErrorKind::config,
                    "dataset dir '" + dir + "' has no sample_0000.{truth,data,init}.dt64");
    return data;
}

void write_loss_csv(const std::string& path, const TrainResult& res) {
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::io, "cannot open '" + path + "'", IoCode::open_failed);
    out << "# epoch,objective";
    for (std::size_t b = 0; b < res.block_loss.front().size(); ++b)
        out << ",block" << b;
    out << "\n";
    char buf[48];
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g", e, res.epoch_loss[e]);
        out << buf;
        for (double v : res.block_loss[e]) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        }
        out << "\n";
    }
    if (!out)
        throw Error(ErrorKind::io, "write to '" + path + "' failed", IoCode::write_failed);
}

int cmd_train(const GlobalOpts& g, const std::string& scenario_path,
              const std::string& dataset_dir, const std::string& out,
              const TrainConfig& tc, std::size_t blocks, const MixerConfig& mc,
              double step_scale, const std::string& loss_out) {
    Timer timer;
    RunManifest man = start_manifest("train", g);
    man.seed = tc.seed;
    add_input(man, scenario_path);
    Scenario sc = load_scenario(scenario_path);
    ScanModel m = build_scan_model(sc);
    std::vector<TrainSample> data = load_dataset_dir(dataset_dir, sc.geometry, man);
    std::printf("train: %zu samples, %zu blocks, %zu epochs\n", data.size(), blocks,
                tc.epochs);

    SurrogateConfig sur;
    sur.step_scale = step_scale;
    UnrolledNet net = init_net(blocks, mc, sur, tc.seed);
    if (tc.pretrain_iters > 0) {
        Timer pre;
        MixerParams theta = pretrain_first_block(data, net, m, tc);
        broadcast_block(net, theta);
        std::printf("train: pretrained block 0 for %zu iters in %.1f s\n",
                    tc.pretrain_iters, pre.seconds());
    }
    TrainResult res = train(data, net, m, tc);
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
        std::printf("train: epoch %zu objective %.6f\n", e, res.epoch_loss[e]);

    save_net(net, out);
    add_output(man, out);
    if (!loss_out.empty()) {
        write_loss_csv(loss_out, res);
        add_output(man, loss_out);
    }
    man.wall_seconds = timer.seconds();
    write_manifest(out + ".manifest.json", man);
    std::printf("train: final objective %.6f -> %s\n", res.epoch_loss.back(), out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct ReconArg {
    std::string label, path;
};

std::vector<ReconArg> parse_recon_args(const std::vector<std::string>& raw) {
    std::vector<ReconArg> out;
    for (const std::string& r : raw) {
        const std::size_t eq = r.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == r.size())
            throw Error(ErrorKind::config, "--recon: expected label=path, got '" + r + "'");
        out.push_back({r.substr(0, eq), r.substr(eq + 1)});
    }
    return out;
}

int cmd_eval(const GlobalOpts& g, const std::string& scenario_path,
             const std::string& roi_path, const std::vector<std::string>& recon_raw,
             const std::string& truth_path, const std::string& energies_spec,
             double profile_energy, const std::string& out_dir) {
    Timer timer;
    RunManifest man = start_manifest("eval", g);
    add_input(man, scenario_path);
    add_input(man, roi_path);
    Scenario sc = load_scenario(scenario_path);
    ScanModel m = build_scan_model(sc);
    std::vector<RoiSpec> rois =
        load_rois(roi_path, sc.geometry.n_x, sc.geometry.n_y, sc.geometry.pixel_size_cm);
    std::vector<double> energies = parse_energies(energies_spec);

    std::vector<ReconArg> recons = parse_recon_args(recon_raw);
    if (recons.empty())
        throw Error(ErrorKind::config, "--recon: at least one label=path required");
    std::vector<BasisImage> images;
    for (const ReconArg& r : recons) {
        add_input(man, r.path);
        images.push_back(load_image(r.path, sc.geometry));
    }

    std::vector<Figure> figures;
    for (const RoiSpec& roi : rois) {
        Figure fig;
        fig.name = "rmae_" + roi.label;
        fig.x_label = "energy_keV";
        fig.y_label = "rmae";
        fig.x = energies;
        for (std::size_t i = 0; i < recons.size(); ++i) {
            RmaeCurve curve = rmae(images[i], roi, m, energies);
            fig.series.push_back({recons[i].label, curve.value});
        }
        figures.push_back(std::move(fig));
    }

    // Middle-row LAC profile at the probe energy, truth overlaid if given.
    Figure prof;
    prof.name = "profile_row_mid";
    prof.x_label = "x_pixel";
    prof.y_label = "lac_per_cm";
    prof.x.resize(sc.geometry.n_x);
    for (std::size_t i = 0; i < sc.geometry.n_x; ++i)
        prof.x[i] = double(i);
    const std::size_t mid_row = sc.geometry.n_y / 2;
    if (!truth_path.empty()) {
        add_input(man, truth_path);
        BasisImage truth = load_image(truth_path, sc.geometry);
        prof.series.push_back(
            {"truth", profile(lac_image(truth, m, profile_energy), sc.geometry.n_x,
                              sc.geometry.n_y, ProfileAxis::row, mid_row)});
    }
    for (std::size_t i = 0; i < recons.size(); ++i)
        prof.series.push_back(
            {recons[i].label, profile(lac_image(images[i], m, profile_energy),
                                      sc.geometry.n_x, sc.geometry.n_y, ProfileAxis::row,
                                      mid_row)});
    figures.push_back(std::move(prof));

    std::vector<std::string> written = emit_report(figures, out_dir);
    for (const std::string& p : written)
        add_output(man, p);
    man.wall_seconds = timer.seconds();
    write_manifest((std::filesystem::path(out_dir) / "manifest.json").string(), man);
    std::printf("eval: %zu figures -> %s\n", figures.size(), out_dir.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// demo

// Coarse embedded tables so the demo has no file dependencies. LAC anchors
// follow the NIST-derived curves shipped in data/ at a 10 keV pitch.
MaterialTable demo_water() {
    MaterialTable t;
    t.material_name = "water";
    t.energies_keV = {20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150};
    t.lac_per_cm = {0.810, 0.376, 0.268, 0.227, 0.206, 0.193, 0.184,
                    0.176, 0.171, 0.165, 0.161, 0.158, 0.154, 0.151};
    return t;
}

MaterialTable demo_bone() {
    MaterialTable t;
    t.material_name = "bone";
    t.energies_keV = {20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150};
    t.lac_per_cm = {4.00, 1.33, 0.666, 0.424, 0.315, 0.260, 0.223,
                    0.205, 0.186, 0.173, 0.163, 0.155, 0.148, 0.142};
    return t;
}

Spectrum demo_spectrum_low() {
    Spectrum s;
    s.label = "L";
    s.energies_keV = {30, 40, 50, 60, 70, 80, 90};
    s.fluence = {4e3, 1.4e4, 2.2e4, 2.4e4, 1.8e4, 1.0e4, 3e3};
    return s;
}

Spectrum demo_spectrum_high() {
    Spectrum s;
    s.label = "H";
    s.energies_keV = {40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140};
    s.fluence = {3e3, 8e3, 1.4e4, 1.9e4, 2.2e4, 2.1e4, 1.8e4, 1.4e4, 9e3, 5e3, 2e3};
    return s;
}

PhantomSpec demo_phantom() {
    PhantomSpec spec;
    spec.field_of_view_cm = 3.2;
    Ellipse body;
    body.semi_a_cm = 1.35;
    body.semi_b_cm = 1.15;
    body.composition = {1.0, 0.0};
    Ellipse bone_insert;
    bone_insert.center_cm = {0.45, -0.30};
    bone_insert.semi_a_cm = 0.32;
    bone_insert.semi_b_cm = 0.26;
    bone_insert.composition = {0.90, 0.55};
    Ellipse dense_insert;
    dense_insert.center_cm = {-0.50, 0.35};
    dense_insert.semi_a_cm = 0.28;
    dense_insert.semi_b_cm = 0.22;
    dense_insert.composition = {1.15, 0.0};
    spec.ellipses = {body, bone_insert, dense_insert};
    return spec;
}

int cmd_demo(const GlobalOpts& g, std::uint64_t seed, const std::string& out_dir) {
    Timer timer;
    RunManifest man = start_manifest("demo", g);
    man.seed = seed;
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw Error(ErrorKind::io, "cannot create '" + out_dir + "': " + ec.message(),
                    IoCode::open_failed);
    auto path_in = [&](const std::string& name) {
        return (fs::path(out_dir) / name).string();
    };

    const std::size_t n = 32;
    Geometry geom = make_uniform_geometry(36, 48, 0.10, n, n, 3.2 / double(n));
    ScanModel m = make_scan_model(geom, demo_spectrum_low(), demo_spectrum_high(),
                                  demo_water(), demo_bone());

    // Phantom and noisy dual-energy data.
    PhantomSpec spec = demo_phantom();
    BasisImage truth = rasterize(spec, n, n);
    save_image(path_in("phantom.dt64"), truth);
    SinogramPair d = simulate(predict(truth, m), split_stream(seed, 1));
    save_sinograms(path_in("sinograms.dt64"), d);
    std::printf("demo: phantom and sinograms written\n");

    // Analytic baseline.
    BasisImage fbp_img = fbp_init(d, m);
    save_image(path_in("fbp.dt64"), fbp_img);

    // Statistical reference with a trace.
    SurrogateConfig sir_cfg;
    sir_cfg.curvature_mode = CurvatureMode::per_iterate;
    PenaltyConfig pen;
    SirResult sir_res = sir_reconstruct(d, fbp_img, m, 60, sir_cfg, pen);
    save_image(path_in("sir.dt64"), sir_res.image);
    write_trace_csv(path_in("sir_trace.csv"), sir_res.trace);
    std::printf("demo: sir objective %.4f -> %.4f over 60 iters\n", sir_res.trace.front(),
                sir_res.trace.back());

    // Small unrolled net trained on a synthetic family from the same model.
    std::vector<BasisImage> family = make_dataset(split_stream(seed, 2), 32, "discs", n, n);
    std::vector<TrainSample> dataset;
    for (std::size_t k = 0; k < family.size(); ++k) {
        TrainSample s;
        s.c_truth = family[k];
        s.c_truth.pixel_size_cm = geom.pixel_size_cm;
        s.d = simulate(predict(s.c_truth, m), split_stream(seed, 100 + k));
        s.c_init = fbp_init(s.d, m);
        dataset.push_back(std::move(s));
    }
    MixerConfig mc;
    mc.features = 8;
    mc.groups = 4;
    mc.kernel = 3;
    TrainConfig tc;
    tc.epochs = 30;
    tc.learning_rate = 0.02;
    tc.batch_size = 4;
    tc.seed = split_stream(seed, 3);
    tc.pretrain_iters = 300;
    tc.clip_norm = 1.0;
    UnrolledNet net = init_net(2, mc, SurrogateConfig{}, tc.seed);
    MixerParams theta = pretrain_first_block(dataset, net, m, tc);
    broadcast_block(net, theta);
    TrainResult tr = train(dataset, net, m, tc);
    std::printf("demo: trained %zu blocks, objective %.4f -> %.4f\n", net.n_blocks(),
                tr.epoch_loss.front(), tr.epoch_loss.back());
    save_net(net, path_in("net.json"));

    Timer infer_timer;
    InferResult unrolled = infer(d, fbp_img, net, m);
    std::printf("demo: unrolled inference %.3f s\n", infer_timer.seconds());
    save_image(path_in("unrolled.dt64"), unrolled.output);

    // Report: RMAE per ROI, middle profile, objective trace.
    std::vector<double> energies;
    for (double e = 20.0; e <= 150.0; e += 10.0)
        energies.push_back(e);
    auto shrink = [](Ellipse e, double f) {
        e.semi_a_cm *= f;
        e.semi_b_cm *= f;
        return e;
    };
    std::vector<RoiSpec> rois = {
        roi_from_ellipse(shrink(spec.ellipses[0], 0.35), n, n, geom.pixel_size_cm, "body"),
        roi_from_ellipse(shrink(spec.ellipses[1], 0.6), n, n, geom.pixel_size_cm,
                         "bone_insert"),
        roi_from_ellipse(shrink(spec.ellipses[2], 0.6), n, n, geom.pixel_size_cm,
                         "dense_insert")};
    rois[0].c1_ref = spec.ellipses[0].composition[0];
    rois[0].c2_ref = spec.ellipses[0].composition[1];
    rois[1].c1_ref = spec.ellipses[1].composition[0];
    rois[1].c2_ref = spec.ellipses[1].composition[1];
    rois[2].c1_ref = spec.ellipses[2].composition[0];
    rois[2].c2_ref = spec.ellipses[2].composition[1];

    struct Method {
        std::string label;
        const BasisImage* img;
    };
    const Method methods[] = {
        {"fbp", &fbp_img}, {"sir", &sir_res.image}, {"unrolled", &unrolled.output}};

    std::vector<Figure> figures;
    for (const RoiSpec& roi : rois) {
        Figure fig;
        fig.name = "rmae_" + roi.label;
        fig.x_label = "energy_keV";
        fig.y_label = "rmae";
        fig.x = energies;
        for (const Method& mm : methods)
            fig.series.push_back({mm.label, rmae(*mm.img, roi, m, energies).value});
        figures.push_back(std::move(fig));
    }
    Figure prof;
    prof.name = "profile_row_mid";
    prof.x_label = "x_pixel";
    prof.y_label = "lac_per_cm";
    for (std::size_t i = 0; i < n; ++i)
        prof.x.push_back(double(i));
    prof.series.push_back(
        {"truth", profile(lac_image(truth, m, 70.0), n, n, ProfileAxis::row, n / 2)});
    for (const Method& mm : methods)
        prof.series.push_back(
            {mm.label, profile(lac_image(*mm.img, m, 70.0), n, n, ProfileAxis::row, n / 2)});
    figures.push_back(std::move(prof));

    Figure trace_fig;
    trace_fig.name = "sir_objective";
    trace_fig.x_label = "iteration";
    trace_fig.y_label = "objective";
    for (std::size_t i = 0; i < sir_res.trace.size(); ++i)
        trace_fig.x.push_back(double(i));
    trace_fig.series.push_back({"sir", sir_res.trace});
    figures.push_back(std::move(trace_fig));

    std::vector<std::string> written = emit_report(figures, path_in("report"));

    for (const char* name : {"phantom.dt64", "sinograms.dt64", "fbp.dt64", "sir.dt64",
                             "sir_trace.csv", "net.json", "net.params.dt64",
                             "unrolled.dt64"})
        add_output(man, path_in(name));
    for (const std::string& p : written)
        add_output(man, p);
    man.wall_seconds = timer.seconds();
    write_manifest(path_in("manifest.json"), man);
    std::printf("demo: complete in %.1f s -> %s\n", man.wall_seconds, out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale dual-energy CT material decomposition laboratory"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    GlobalOpts globals;
    app.add_option("--threads", globals.threads, "Worker thread cap (0 = hardware)");
    app.add_flag("--deterministic", globals.deterministic,
                 "Single-threaded fixed-order reductions for bit-exact output");

    // phantom
    auto* p_cmd = app.add_subcommand("phantom", "Rasterize an ellipse phantom spec");
    std::string p_spec, p_out;
    std::size_t p_nx = 64, p_ny = 0;
    p_cmd->add_option("--spec", p_spec, "Phantom spec JSON")->required();
    p_cmd->add_option("--nx", p_nx, "Image width in pixels")->required();
    p_cmd->add_option("--ny", p_ny, "Image height (default: same as --nx)");
    p_cmd->add_option("--out", p_out, "Output image (.dt64)")->required();

    // simulate
    auto* s_cmd = app.add_subcommand("simulate", "Poisson dual-energy transmission data");
    std::string s_scenario, s_phantom, s_out;
    std::uint64_t s_seed = 0;
    bool s_noiseless = false;
    s_cmd->add_option("--scenario", s_scenario, "Scenario JSON")->required();
    s_cmd->add_option("--phantom", s_phantom, "Phantom image (.dt64)")->required();
    s_cmd->add_option("--seed", s_seed, "Noise seed");
    s_cmd->add_flag("--noiseless", s_noiseless, "Write expected counts, no noise");
    s_cmd->add_option("--out", s_out, "Output sinogram pair (.dt64)")->required();

    // recon
    auto* r_cmd = app.add_subcommand("recon", "Reconstruct basis images");
    r_cmd->require_subcommand(1);

    auto* rf = r_cmd->add_subcommand("fbp", "Filtered backprojection + decomposition");
    std::string rf_scenario, rf_data, rf_out, rf_window = "hann";
    rf->add_option("--scenario", rf_scenario, "Scenario JSON")->required();
    rf->add_option("--data", rf_data, "Sinogram pair (.dt64)")->required();
    rf->add_option("--window", rf_window, "Filter window: hann | ram-lak");
    rf->add_option("--out", rf_out, "Output image (.dt64)")->required();

    auto* rs = r_cmd->add_subcommand("sir", "Statistical iterative reconstruction");
    std::string rs_scenario, rs_data, rs_out, rs_init = "fbp", rs_penalty = "none";
    std::string rs_curvature = "periter", rs_trace;
    std::size_t rs_iters = 100;
    double rs_beta = 0.0, rs_delta = 0.1, rs_step = 1.0;
    bool rs_nonneg = true;
    rs->add_option("--scenario", rs_scenario, "Scenario JSON")->required();
    rs->add_option("--data", rs_data, "Sinogram pair (.dt64)")->required();
    rs->add_option("--init", rs_init, "Start image: fbp | zero | <path>");
    rs->add_option("--iters", rs_iters, "Iteration count");
    rs->add_option("--beta", rs_beta, "Roughness penalty weight");
    rs->add_option("--penalty", rs_penalty, "Penalty: none | quad | huber");
    rs->add_option("--huber-delta", rs_delta, "Huber transition point");
    rs->add_option("--step-scale", rs_step, "Surrogate step damping in (0, 1]");
    rs->add_flag("--nonneg,!--no-nonneg", rs_nonneg, "Clamp iterates at zero");
    rs->add_option("--curvature", rs_curvature, "Curvature: periter | precomputed");
    rs->add_option("--trace-out", rs_trace, "Objective trace CSV");
    rs->add_option("--out", rs_out, "Output image (.dt64)")->required();

    auto* ru = r_cmd->add_subcommand("unrolled", "Trained unrolled network inference");
    std::string ru_scenario, ru_data, ru_net, ru_out, ru_init = "fbp";
    ru->add_option("--scenario", ru_scenario, "Scenario JSON")->required();
    ru->add_option("--data", ru_data, "Sinogram pair (.dt64)")->required();
    ru->add_option("--net", ru_net, "Trained net manifest (.json)")->required();
    ru->add_option("--init", ru_init, "Start image: fbp | zero | <path>");
    ru->add_option("--out", ru_out, "Output image (.dt64)")->required();

    // train
    auto* t_cmd = app.add_subcommand("train", "Train an unrolled net on a dataset dir");
    std::string t_scenario, t_dataset, t_out, t_loss;
    TrainConfig t_cfg;
    std::size_t t_blocks = 4;
    MixerConfig t_mixer;
    double t_step = 1.0;
    t_cmd->add_option("--scenario", t_scenario, "Scenario JSON")->required();
    t_cmd->add_option("--dataset", t_dataset,
                      "Dir with sample_NNNN.{truth,data,init}.dt64 triplets")
        ->required();
    t_cmd->add_option("--out", t_out, "Output net manifest (.json)")->required();
    t_cmd->add_option("--epochs", t_cfg.epochs, "Training epochs");
    t_cmd->add_option("--lr", t_cfg.learning_rate, "Learning rate");
    t_cmd->add_option("--blocks", t_blocks, "Unrolled block count");
    t_cmd->add_option("--pretrain-iters", t_cfg.pretrain_iters,
                      "Block-0 pretraining iterations");
    t_cmd->add_option("--seed", t_cfg.seed, "Init and shuffle seed");
    t_cmd->add_option("--batch", t_cfg.batch_size, "Batch size");
    t_cmd->add_option("--clip", t_cfg.clip_norm, "Global gradient-norm clip");
    t_cmd->add_option("--supervision-fraction", t_cfg.supervision_fraction,
                      "Fraction of epochs with intermediate supervision");
    t_cmd->add_option("--features", t_mixer.features, "Mixer feature channels");
    t_cmd->add_option("--groups", t_mixer.groups, "Group-norm groups");
    t_cmd->add_option("--kernel", t_mixer.kernel, "Conv kernel size (odd)");
    t_cmd->add_option("--step-scale", t_step, "DC step damping in (0, 1]");
    t_cmd->add_option("--loss-out", t_loss, "Per-epoch loss CSV");

    // eval
    auto* e_cmd = app.add_subcommand("eval", "RMAE curves and profiles for recons");
    std::string e_scenario, e_roi, e_truth, e_energies = "20:150:10", e_dir;
    double e_profile_energy = 70.0;
    std::vector<std::string> e_recons;
    e_cmd->add_option("--scenario", e_scenario, "Scenario JSON")->required();
    e_cmd->add_option("--roi", e_roi, "ROI JSON")->required();
    e_cmd->add_option("--recon", e_recons, "label=path, repeatable")->required();
    e_cmd->add_option("--truth", e_truth, "Truth image for profile overlay");
    e_cmd->add_option("--energies", e_energies, "lo:hi:step or comma list, keV");
    e_cmd->add_option("--profile-energy", e_profile_energy, "Profile energy, keV");
    e_cmd->add_option("--out-dir", e_dir, "Report directory")->required();

    // demo
    auto* d_cmd = app.add_subcommand("demo", "End-to-end pipeline on synthetic data");
    std::uint64_t d_seed = 7;
    std::string d_dir;
    d_cmd->add_option("--seed", d_seed, "Master seed");
    d_cmd->add_option("--out-dir", d_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "dect: " << e.what() << "\n";
        return 2;
    }

    try {
        apply_globals(globals);
        if (p_cmd->parsed())
            return cmd_phantom(globals, p_spec, p_nx, p_ny, p_out);
        if (s_cmd->parsed())
            return cmd_simulate(globals, s_scenario, s_phantom, s_seed, s_noiseless, s_out);
        if (r_cmd->parsed()) {
            if (rf->parsed())
                return cmd_recon_fbp(globals, rf_scenario, rf_data, rf_window, rf_out);
            if (rs->parsed())
                return cmd_recon_sir(globals, rs_scenario, rs_data, rs_init, rs_iters,
                                     rs_beta, rs_penalty, rs_delta, rs_step, rs_nonneg,
                                     rs_curvature, rs_trace, rs_out);
            if (ru->parsed())
                return cmd_recon_unrolled(globals, ru_scenario, ru_data, ru_net, ru_init,
                                          ru_out);
        }
        if (t_cmd->parsed())
            return cmd_train(globals, t_scenario, t_dataset, t_out, t_cfg, t_blocks,
                             t_mixer, t_step, t_loss);
        if (e_cmd->parsed())
            return cmd_eval(globals, e_scenario, e_roi, e_recons, e_truth, e_energies,
                            e_profile_energy, e_dir);
        if (d_cmd->parsed())
            return cmd_demo(globals, d_seed, d_dir);
        std::cerr << "dect: no command\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "dect: error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "dect: unexpected error: " << e.what() << "\n";
        return 1;
    }
}
