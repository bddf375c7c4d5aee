#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wmseg/energy.hpp"
#include "wmseg/error.hpp"
#include "wmseg/io.hpp"
#include "wmseg/lifting.hpp"
#include "wmseg/optimize_alt.hpp"
#include "wmseg/optimize_bnb.hpp"
#include "wmseg/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wmseg;

namespace {

struct LearnArgs {
    std::string tmpl;
    std::string samples;
    std::size_t n_modes = 2;
    double spacing = 0.25;
    double gamma = 0.1;
    bool with_scale = false;
};

struct SynthArgs {
    std::string tmpl;
    std::string shape = "star";
    double size = 7.5;
    double spacing = 0.5;
    std::string modes;
    std::vector<double> lambda;
    std::size_t width = 64;
    std::size_t height = 64;
    std::string noise = "none";
    double noise_std = 0.3;
    std::size_t blob_count = 3;
    double blob_size = 3.0;
    double occlusion = 0.3;
};

struct SegmentArgs {
    std::string tmpl;
    std::string image;
    std::string modes;
    std::string region;
    std::string init;
    std::string method = "combined";
    std::string backend = "transport";
    double tau = 1.0;
    double sigma_tv = 0.0;
    std::optional<double> gamma;
    double stop_px = 1.0;
    std::size_t budget = 20000;
    double background = 0.0;
    bool with_scale = false;
    std::size_t max_iters = 100;
    double tol = 1e-7;
    bool bisect_longest = false;
};

struct EvalArgs {
    std::string mask;
    std::string truth;
};

std::uint64_t g_seed = 0;
std::string g_out_dir = "out";

json option_echo(const CLI::App& app) {
    json settings = json::object();
    json given = json::array();
    for (const CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config") continue;
        const auto& results = opt->results();
        if (!results.empty()) {
            given.push_back(name);
            settings[name] = results.size() == 1 ? json(results.front()) : json(results);
        } else {
            settings[name] = opt->get_default_str();
        }
    }
    return {{"values", settings}, {"explicit", given}};
}

json manifest_base(const std::string& command, const CLI::App& app, const CLI::App& sub) {
    json m;
    m["command"] = command;
    m["seed"] = g_seed;
    m["out_dir"] = g_out_dir;
    m["settings"] = option_echo(sub);
    m["global"] = option_echo(app);
    m["tolerances"] = {{"mass", kMassTolerance}};
    return m;
}

fs::path out_path(const std::string& name) {
    fs::create_directories(g_out_dir);
    return fs::path(g_out_dir) / name;
}

ModeBasis load_or_default_basis(const std::string& path, const TemplateShape& tmpl, bool with_scale) {
    if (!path.empty()) return io::load_modes(path);
    return geometric_basis(tmpl, with_scale);
}

void write_segmentation(const Segmentation& seg, const ImageDomain& image, json& manifest) {
    const auto mask = seg.mask(image);
    if (image.raster) {
        io::write_mask(mask, image.raster->width, image.raster->height, out_path("mask.pgm"));
        manifest["outputs"]["mask"] = "mask.pgm";
    } else {
        std::ofstream os(out_path("mask.csv"));
        os << "j,label\n";
        for (std::size_t j = 0; j < mask.size(); ++j) os << j << ',' << (mask[j] ? 1 : 0) << '\n';
        manifest["outputs"]["mask"] = "mask.csv";
    }
}

LambdaBox default_region(const ModeBasis& basis, const ImageDomain& image) {
    double x0 = image.points[0].x, x1 = x0, y0 = image.points[0].y, y1 = y0;
    for (const Point2& p : image.points) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    LambdaBox box;
    for (std::size_t k = 0; k < basis.size(); ++k) {
        double lo = 0.0, hi = 0.0;
        switch (basis.modes[k].role) {
            case ModeRole::translation_x:
                lo = x0;
                hi = x1;
                break;
            case ModeRole::translation_y:
                lo = y0;
                hi = y1;
                break;
            case ModeRole::rotation:
                lo = -0.6;
                hi = 0.6;
                break;
            case ModeRole::scale:
                lo = -0.3;
                hi = 0.5;
                break;
            case ModeRole::statistical:
                lo = -2.0 * basis.sigma[k];
                hi = 2.0 * basis.sigma[k];
                break;
        }
        box.lower.push_back(lo);
        box.upper.push_back(hi);
    }
    return box;
}

json lambda_json(std::span<const double> lambda) { return json(std::vector<double>(lambda.begin(), lambda.end())); }

int run_learn(const LearnArgs& a, const CLI::App& app, const CLI::App& sub) {
    TemplateShape tmpl = io::load_template(a.tmpl);
    if (!tmpl.contour) throw Error("io.parse", "learn-modes needs a template with a contour");
    const json samples_json = io::read_json(a.samples);
    const json& list = samples_json.is_object() ? samples_json.at("contours") : samples_json;
    std::vector<Polygon> samples;
    for (const json& c : list) samples.push_back(io::polygon_from_json(c));
    const Polygon mean = mean_contour(samples, tmpl.contour->size());
    const NeumannGrid grid = NeumannGrid::from_contour(mean, a.spacing);
    const LearnedModes learned = learn_statistical_modes(mean, samples, a.n_modes, grid, tmpl);

    ModeBasis basis = geometric_basis(tmpl, a.with_scale);
    basis.gamma = a.gamma;
    for (std::size_t k = 0; k < learned.modes.size(); ++k) {
        basis.modes.push_back(learned.modes[k]);
        basis.sigma.push_back(learned.sigmas[k]);
    }
    io::save_modes(basis, out_path("modes.json"));
    json m = manifest_base("learn-modes", app, sub);
    m["outputs"] = {{"modes", "modes.json"}};
    m["sigmas"] = learned.sigmas;
    m["scale_coeffs"] = learned.scale_coeffs;
    m["sample_count"] = samples.size();
    io::write_json(out_path("manifest.json"), m);
    std::cout << json{{"status", "ok"}, {"modes", basis.size()}}.dump() << '\n';
    return 0;
}

int run_synth(const SynthArgs& a, const CLI::App& app, const CLI::App& sub) {
    TemplateShape tmpl = a.tmpl.empty() ? template_from_contour(builtin_shape(a.shape, a.size), a.spacing)
                                        : io::load_template(a.tmpl);
    ModeBasis basis = load_or_default_basis(a.modes, tmpl, false);
    std::vector<double> lambda = a.lambda;
    if (lambda.empty()) {
        lambda.assign(basis.size(), 0.0);
        for (std::size_t k = 0; k < basis.size(); ++k) {
            if (basis.modes[k].role == ModeRole::translation_x) lambda[k] = 0.5 * static_cast<double>(a.width);
            if (basis.modes[k].role == ModeRole::translation_y) lambda[k] = 0.5 * static_cast<double>(a.height);
        }
    }
    NoiseSpec noise;
    noise.kind = noise_kind_from_string(a.noise);
    noise.std_dev = a.noise_std;
    noise.count = a.blob_count;
    noise.size = a.blob_size;
    noise.fraction = a.occlusion;
    const Scenario s = synth_scenario({tmpl, basis, lambda, a.width, a.height, noise, g_seed});

    io::save_template(tmpl, out_path("template.json"));
    io::write_json(out_path("image.json"), io::to_json(s.image));
    io::GrayImage gray{a.width, a.height, {}};
    for (const FeatureVector& f : s.image.features) {
        gray.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(f[0], 0.0, 1.0) * 255.0)));
    }
    io::write_pgm(gray, out_path("image.pgm"));
    io::write_mask(s.truth_mask, a.width, a.height, out_path("truth.pgm"));
    io::write_json(out_path("truth.json"), {{"lambda", lambda}, {"contour", io::to_json(s.truth_contour)}});

    json m = manifest_base("synth", app, sub);
    m["lambda_star"] = lambda;
    m["noise"] = {{"kind", std::string(to_string(noise.kind))},
                  {"std", noise.std_dev},
                  {"count", noise.count},
                  {"size", noise.size},
                  {"fraction", noise.fraction}};
    m["template_points"] = tmpl.size();
    m["outputs"] = {{"template", "template.json"}, {"image", "image.json"}, {"preview", "image.pgm"},
                    {"truth_mask", "truth.pgm"}, {"truth", "truth.json"}};
    io::write_json(out_path("manifest.json"), m);
    std::cout << json{{"status", "ok"}, {"template_points", tmpl.size()}}.dump() << '\n';
    return 0;
}

int run_segment(const SegmentArgs& a, const CLI::App& app, const CLI::App& sub) {
    TemplateShape tmpl = io::load_template(a.tmpl);
    ImageDomain image = io::load_image(a.image);
    ModeBasis basis = load_or_default_basis(a.modes, tmpl, a.with_scale);
    std::vector<std::size_t> grid;
    const LambdaBox region = a.region.empty() ? default_region(basis, image) : io::load_region(a.region, &grid);
    const Backend backend = backend_from_string(a.backend);
    if (a.method != "bnb" && a.method != "alt" && a.method != "combined") {
        throw Error("config.method", "unknown method '" + a.method + "' (bnb, alt, combined)");
    }
    if (a.method == "bnb" && a.sigma_tv > 0.0) {
        throw Error("config.backend", "bnb bounds the transport energy; use --sigma-tv 0");
    }

    EnergyConfig cfg;
    cfg.tau = a.tau;
    cfg.sigma_tv = a.sigma_tv;
    cfg.gamma = a.gamma;
    cfg.g_background = background_shift(image, FeatureVector(image.features.at(0).size(), a.background), a.tau);
    const Problem problem(tmpl, image, basis, FeatureCost::squared_euclidean(), cfg);

    BnbOptions bo;
    bo.stop_px = a.stop_px;
    bo.budget = a.budget;
    bo.grid = grid;
    bo.bisect_longest = a.bisect_longest;
    AltOptions ao;
    ao.backend = backend;
    ao.max_iters = a.max_iters;
    ao.tol = a.tol;

    json m = manifest_base("segment", app, sub);
    m["region"] = {{"lower", region.lower}, {"upper", region.upper}, {"grid", grid}};
    m["tolerances"]["alt_tol"] = ao.tol;
    m["tolerances"]["scale_width"] = ao.scale_width;
    m["tolerances"]["stop_px"] = bo.stop_px;
    m["defaults"] = {{"scale_interval", {ao.scale_lower, ao.scale_upper}},
                     {"initial_radius", problem.initial_radius()},
                     {"row_entries", cfg.row_entries},
                     {"gamma", a.gamma.value_or(basis.gamma)}};

    std::vector<double> lambda;
    double energy = 0.0;
    Coupling plan;
    Segmentation seg;
    std::vector<TraceRow> trace;
    std::optional<BnbResult> bnb;

    std::ofstream report;
    if (a.method != "alt") {
        report.open(out_path("bounds.jsonl"));
        bo.report = &report;
        m["outputs"]["bounds"] = "bounds.jsonl";
    }
    if (a.method == "bnb") {
        bnb = bnb_optimize(region, problem, bo);
        lambda = bnb->lambda;
        energy = bnb->value;
        plan = bnb->plan;
        seg = project_to_segmentation(plan, image);
    } else {
        std::vector<double> start(basis.size(), 0.0);
        if (!a.init.empty()) start = io::load_lambda(a.init);
        if (a.method == "alt") {
            if (a.init.empty()) start = region.center();
            AltResult r = alternating_optimize(start, problem, ao);
            lambda = r.lambda;
            energy = r.energy;
            plan = r.plan;
            seg = r.segmentation;
            trace = r.trace;
            m["converged"] = r.converged;
            m["iterations"] = r.iterations;
        } else {
            std::vector<bool> bnb_modes(basis.size(), false);
            for (std::size_t k = 0; k < basis.size(); ++k) {
                const ModeRole role = basis.modes[k].role;
                bnb_modes[k] = role == ModeRole::translation_x || role == ModeRole::translation_y ||
                               role == ModeRole::rotation;
            }
            CombinedResult r = combined_optimize(region, problem, bnb_modes, bo, ao);
            bnb = r.bnb;
            lambda = r.lambda;
            energy = r.energy;
            plan = r.alt.plan;
            seg = r.segmentation;
            trace = r.alt.trace;
            m["converged"] = r.alt.converged;
            m["iterations"] = r.alt.iterations;
        }
    }
    if (bnb) {
        m["bnb"] = {{"lambda", bnb->lambda},
                    {"value", bnb->value},
                    {"lower_bound", bnb->lower_bound},
                    {"certified_gap", bnb->gap},
                    {"budget_exhausted", bnb->budget_exhausted},
                    {"bounds_evaluated", bnb->bounds_evaluated},
                    {"max_depth", bnb->max_depth},
                    {"open_boxes", bnb->open_boxes}};
    }

    write_segmentation(seg, image, m);
    io::save_coupling_csv(plan, out_path("coupling.csv"));
    m["outputs"]["coupling"] = "coupling.csv";
    if (!trace.empty()) {
        io::save_trace_csv(trace, out_path("trace.csv"));
        m["outputs"]["trace"] = "trace.csv";
    }
    std::size_t fg = 0;
    for (auto v : seg.mask(image)) fg += v ? 1 : 0;
    m["result"] = {{"lambda", lambda_json(lambda)}, {"energy", energy}, {"foreground_pixels", fg}};
    io::write_json(out_path("manifest.json"), m);
    std::cout << json{{"status", "ok"}, {"lambda", lambda_json(lambda)}, {"energy", energy}}.dump() << '\n';
    return 0;
}

int run_evaluate(const EvalArgs& a, const CLI::App& app, const CLI::App& sub) {
    std::size_t w1 = 0, h1 = 0, w2 = 0, h2 = 0;
    const auto mask = io::read_mask(a.mask, &w1, &h1);
    const auto truth = io::read_mask(a.truth, &w2, &h2);
    if (w1 != w2 || h1 != h2) throw Error("io.parse", "mask and truth have different sizes");
    const double iou = mask_iou(mask, truth);
    json m = manifest_base("evaluate", app, sub);
    m["iou"] = iou;
    io::write_json(out_path("evaluation.json"), m);
    std::cout << json{{"status", "ok"}, {"iou", iou}}.dump() << '\n';
    return 0;
}

int fail(const std::string& code, const std::string& message) {
    std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
    return code.rfind("io.", 0) == 0 || code.rfind("config.", 0) == 0 ? 2 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shape-prior segmentation with transport-based template matching"};
    app.set_config("--config", "", "TOML/INI file with option values (flags take precedence)");
    app.require_subcommand(1);
    app.add_option("--seed", g_seed, "Random seed")->capture_default_str();
    app.add_option("--out-dir", g_out_dir, "Output directory")->capture_default_str();

    LearnArgs la;
    CLI::App* learn = app.add_subcommand("learn-modes", "Learn statistical modes from aligned contours");
    learn->add_option("--template", la.tmpl, "Template JSON with contour")->required();
    learn->add_option("--samples", la.samples, "JSON list of aligned training contours")->required();
    learn->add_option("--n-modes", la.n_modes, "Number of statistical modes")->capture_default_str();
    learn->add_option("--spacing", la.spacing, "Lifting grid spacing")->capture_default_str();
    learn->add_option("--gamma", la.gamma, "Weight of the mode prior")->capture_default_str();
    learn->add_flag("--scale", la.with_scale, "Include the scale mode");

    SynthArgs sa;
    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic scene");
    synth->add_option("--template", sa.tmpl, "Template JSON (default: built-in shape)");
    synth->add_option("--shape", sa.shape, "Built-in shape")->capture_default_str();
    synth->add_option("--size", sa.size, "Built-in shape size in pixels")->capture_default_str();
    synth->add_option("--spacing", sa.spacing, "Template lattice spacing")->capture_default_str();
    synth->add_option("--modes", sa.modes, "Modes JSON (default: translation and rotation)");
    synth->add_option("--lambda", sa.lambda, "Ground-truth coefficients")->delimiter(',');
    synth->add_option("--width", sa.width, "Canvas width")->capture_default_str();
    synth->add_option("--height", sa.height, "Canvas height")->capture_default_str();
    synth->add_option("--noise", sa.noise, "none, local-gaussian, nonlocal-blobs or occlusion")->capture_default_str();
    synth->add_option("--noise-std", sa.noise_std, "Gaussian noise std")->capture_default_str();
    synth->add_option("--blob-count", sa.blob_count, "Number of blobs")->capture_default_str();
    synth->add_option("--blob-size", sa.blob_size, "Blob radius")->capture_default_str();
    synth->add_option("--occlusion", sa.occlusion, "Occluded foreground fraction")->capture_default_str();

    SegmentArgs ga;
    CLI::App* segment = app.add_subcommand("segment", "Segment an image with a template prior");
    segment->add_option("--template", ga.tmpl, "Template JSON")->required();
    segment->add_option("--image", ga.image, "Image JSON or 8-bit PGM")->required();
    segment->add_option("--modes", ga.modes, "Modes JSON (default: geometric modes)");
    segment->add_option("--method", ga.method, "bnb, alt or combined")->capture_default_str();
    segment->add_option("--backend", ga.backend, "transport or graphcut")->capture_default_str();
    segment->add_option("--tau", ga.tau, "Feature cost weight")->capture_default_str();
    segment->add_option("--sigma-tv", ga.sigma_tv, "Total variation weight")->capture_default_str();
    segment->add_option("--gamma", ga.gamma, "Override of the mode prior weight");
    segment->add_option("--region", ga.region, "Region JSON {lower, upper, grid}");
    segment->add_option("--init", ga.init, "Initial coefficients JSON for alt");
    segment->add_option("--stop-px", ga.stop_px, "Branch-and-bound stopping width in pixels")->capture_default_str();
    segment->add_option("--budget", ga.budget, "Maximum number of bound evaluations")->capture_default_str();
    segment->add_option("--background", ga.background, "Background feature value")->capture_default_str();
    segment->add_flag("--scale", ga.with_scale, "Add the scale mode to the default basis");
    segment->add_option("--max-iters", ga.max_iters, "Alternating iterations")->capture_default_str();
    segment->add_option("--tol", ga.tol, "Alternating energy-decrease tolerance")->capture_default_str();
    segment->add_flag("--bisect-longest", ga.bisect_longest, "Split only the widest axis");

    EvalArgs ea;
    CLI::App* evaluate = app.add_subcommand("evaluate", "Compare a mask with ground truth");
    evaluate->add_option("--mask", ea.mask, "Mask PGM")->required();
    evaluate->add_option("--truth", ea.truth, "Ground-truth mask PGM")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::FileError& e) {
        return fail("io.missing", e.what());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (learn->parsed()) return run_learn(la, app, *learn);
        if (synth->parsed()) return run_synth(sa, app, *synth);
        if (segment->parsed()) return run_segment(ga, app, *segment);
        return run_evaluate(ea, app, *evaluate);
    } catch (const Error& e) {
        return fail(e.code(), e.what());
    } catch (const json::exception& e) {
        return fail("io.parse", e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
}
