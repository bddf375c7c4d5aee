#include "wmseg/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "wmseg/error.hpp"

namespace wmseg::io {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io.missing", "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io.write", "cannot write '" + path.string() + "'");
    out << text;
}

json read_json(const fs::path& path) {
    const std::string text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error("io.parse", path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

namespace {

template <class F>
auto parsing(const char* what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw Error("io.parse", std::string(what) + ": " + e.what());
    }
}

Point2 point_from(const json& j) {
    if (!j.is_array() || j.size() != 2) throw Error("io.parse", "points must be [x, y] pairs");
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

json points_json(std::span<const Point2> pts) {
    json a = json::array();
    for (const Point2& p : pts) a.push_back({p.x, p.y});
    return a;
}

std::vector<Point2> points_from(const json& j) {
    std::vector<Point2> out;
    for (const json& p : j) out.push_back(point_from(p));
    return out;
}

std::vector<FeatureVector> features_from(const json& j, std::size_t n) {
    std::vector<FeatureVector> out;
    if (j.is_null()) {
        out.assign(n, FeatureVector{});
        return out;
    }
    for (const json& f : j) {
        if (f.is_number()) {
            out.push_back({f.get<double>()});
        } else {
            out.push_back(f.get<FeatureVector>());
        }
    }
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

bool is_header(const std::vector<std::string>& cells) {
    if (cells.empty()) return false;
    try {
        std::size_t used = 0;
        std::stod(cells[0], &used);
        return false;
    } catch (const std::exception&) {
        return true;
    }
}

std::string format_double(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

} // namespace

json to_json(const TemplateShape& t) {
    json j;
    j["points"] = points_json(t.points);
    j["masses"] = t.masses;
    j["features"] = t.features;
    if (t.contour) j["contour"] = points_json(*t.contour);
    return j;
}

TemplateShape template_from_json(const json& j) {
    return parsing("template", [&] {
        TemplateShape t;
        t.points = points_from(j.at("points"));
        t.masses = j.contains("masses") ? j.at("masses").get<std::vector<double>>()
                                        : std::vector<double>(t.points.size(), 1.0);
        t.features = features_from(j.contains("features") ? j.at("features") : json(), t.points.size());
        if (j.contains("contour") && !j.at("contour").is_null()) t.contour = points_from(j.at("contour"));
        t.validate();
        return t;
    });
}

TemplateShape load_template(const fs::path& path) { return template_from_json(read_json(path)); }
void save_template(const TemplateShape& t, const fs::path& path) { write_json(path, to_json(t)); }

json to_json(const ImageDomain& d) {
    json j;
    j["points"] = points_json(d.points);
    j["capacities"] = d.capacities;
    j["features"] = d.features;
    if (!d.adjacency.empty()) {
        json a = json::array();
        for (const Edge& e : d.adjacency) a.push_back({e.a, e.b, e.weight});
        j["adjacency"] = a;
    }
    if (d.raster) j["raster"] = {{"width", d.raster->width}, {"height", d.raster->height}};
    return j;
}

ImageDomain image_from_json(const json& j) {
    return parsing("image", [&] {
        ImageDomain d;
        d.points = points_from(j.at("points"));
        d.capacities = j.contains("capacities") ? j.at("capacities").get<std::vector<double>>()
                                                : std::vector<double>(d.points.size(), 1.0);
        d.features = features_from(j.contains("features") ? j.at("features") : json(), d.points.size());
        if (j.contains("adjacency")) {
            for (const json& e : j.at("adjacency")) {
                d.adjacency.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>()});
            }
        } else {
            d.adjacency = lattice_adjacency(d.points);
        }
        if (j.contains("raster")) {
            d.raster = RasterShape{j.at("raster").at("width").get<std::size_t>(),
                                   j.at("raster").at("height").get<std::size_t>()};
        }
        d.validate();
        return d;
    });
}

GrayImage read_pgm(const fs::path& path) {
    const std::string data = read_text(path);
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < data.size()) {
            if (data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos])) && data[pos] != '#') ++pos;
        if (start == pos) throw Error("io.parse", path.string() + ": truncated PGM header");
        return data.substr(start, pos - start);
    };
    const std::string magic = next_token();
    if (magic != "P5" && magic != "P2") throw Error("io.parse", path.string() + ": not a PGM file");
    GrayImage img;
    std::size_t maxval = 0;
    try {
        img.width = std::stoul(next_token());
        img.height = std::stoul(next_token());
        maxval = std::stoul(next_token());
    } catch (const std::logic_error&) {
        throw Error("io.parse", path.string() + ": malformed PGM header");
    }
    if (maxval == 0 || maxval > 255) throw Error("io.parse", path.string() + ": only 8-bit PGM is supported");
    const std::size_t n = img.width * img.height;
    img.pixels.resize(n);
    if (magic == "P5") {
        ++pos;  // single whitespace after maxval
        if (data.size() < pos + n) throw Error("io.parse", path.string() + ": truncated PGM data");
        for (std::size_t k = 0; k < n; ++k) img.pixels[k] = static_cast<std::uint8_t>(data[pos + k]);
    } else {
        for (std::size_t k = 0; k < n; ++k) {
            const unsigned long v = std::stoul(next_token());
            if (v > maxval) throw Error("io.parse", path.string() + ": PGM value exceeds maxval");
            img.pixels[k] = static_cast<std::uint8_t>(v);
        }
    }
    if (maxval != 255) {
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>((p * 255 + maxval / 2) / maxval);
    }
    return img;
}

void write_pgm(const GrayImage& img, const fs::path& path) {
    if (img.pixels.size() != img.width * img.height) throw Error("io.write", "image size mismatch");
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    write_text(path, out);
}

ImageDomain image_from_gray(const GrayImage& img) {
    ImageDomain d;
    for (std::size_t r = 0; r < img.height; ++r) {
        for (std::size_t c = 0; c < img.width; ++c) {
            d.points.push_back({static_cast<double>(c), static_cast<double>(r)});
            d.capacities.push_back(1.0);
            d.features.push_back({img.pixels[r * img.width + c] / 255.0});
        }
    }
    d.raster = RasterShape{img.width, img.height};
    for (std::size_t r = 0; r < img.height; ++r) {
        for (std::size_t c = 0; c < img.width; ++c) {
            const std::size_t k = r * img.width + c;
            if (c + 1 < img.width) d.adjacency.push_back({k, k + 1, 1.0});
            if (r + 1 < img.height) d.adjacency.push_back({k, k + img.width, 1.0});
        }
    }
    return d;
}

ImageDomain load_image(const fs::path& path) {
    const std::string head = read_text(path).substr(0, 2);
    if (head == "P5" || head == "P2") return image_from_gray(read_pgm(path));
    return image_from_json(read_json(path));
}

void write_mask(std::span<const std::uint8_t> mask, std::size_t width, std::size_t height, const fs::path& path) {
    if (mask.size() != width * height) throw Error("io.write", "mask size does not match width x height");
    GrayImage img{width, height, {}};
    img.pixels.reserve(mask.size());
    for (std::uint8_t m : mask) img.pixels.push_back(m ? 255 : 0);
    write_pgm(img, path);
}

std::vector<std::uint8_t> read_mask(const fs::path& path, std::size_t* width, std::size_t* height) {
    const GrayImage img = read_pgm(path);
    if (width) *width = img.width;
    if (height) *height = img.height;
    std::vector<std::uint8_t> m;
    m.reserve(img.pixels.size());
    for (std::uint8_t p : img.pixels) m.push_back(p >= 128 ? 1 : 0);
    return m;
}

std::vector<Edge> load_adjacency_csv(const fs::path& path, std::size_t node_count) {
    std::istringstream in(read_text(path));
    std::vector<Edge> edges;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (line_no == 1 && is_header(cells)) continue;
        if (cells.size() != 3) throw Error("io.parse", path.string() + ": expected j,j',a on line " + std::to_string(line_no));
        try {
            edges.push_back({std::stoul(cells[0]), std::stoul(cells[1]), std::stod(cells[2])});
        } catch (const std::logic_error&) {
            throw Error("io.parse", path.string() + ": malformed line " + std::to_string(line_no));
        }
    }
    check_adjacency(edges, node_count);
    return edges;
}

void save_adjacency_csv(std::span<const Edge> edges, const fs::path& path) {
    std::string out = "j,j',a\n";
    for (const Edge& e : edges) out += std::to_string(e.a) + "," + std::to_string(e.b) + "," + format_double(e.weight) + "\n";
    write_text(path, out);
}

void save_coupling_csv(const Coupling& pi, const fs::path& path) {
    std::string out = "i,j,mass\n";
    for (const CouplingEntry& e : pi.entries) {
        out += std::to_string(e.i) + "," + std::to_string(e.j) + "," + format_double(e.mass) + "\n";
    }
    write_text(path, out);
}

Coupling load_coupling_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    Coupling pi;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (line_no == 1 && is_header(cells)) continue;
        if (cells.size() != 3) throw Error("io.parse", path.string() + ": expected i,j,mass on line " + std::to_string(line_no));
        try {
            pi.entries.push_back({std::stoul(cells[0]), std::stoll(cells[1]), std::stod(cells[2])});
        } catch (const std::logic_error&) {
            throw Error("io.parse", path.string() + ": malformed line " + std::to_string(line_no));
        }
    }
    pi.validate();
    return pi;
}

void save_trace_csv(std::span<const TraceRow> trace, const fs::path& path) {
    std::string out = "iteration";
    const std::size_t n = trace.empty() ? 0 : trace.front().lambda.size();
    for (std::size_t k = 0; k < n; ++k) out += ",lambda_" + std::to_string(k);
    out += ",energy,backend,step\n";
    for (const TraceRow& r : trace) {
        out += std::to_string(r.iteration);
        for (double l : r.lambda) out += "," + format_double(l);
        out += "," + format_double(r.energy) + "," + std::string(to_string(r.backend)) + "," + r.step + "\n";
    }
    write_text(path, out);
}

json to_json(const ModeBasis& b) {
    json modes = json::array();
    for (std::size_t k = 0; k < b.size(); ++k) {
        const Mode& m = b.modes[k];
        modes.push_back({{"role", to_string(m.role)},
                         {"divergence_class", to_string(m.divergence_class)},
                         {"sigma", b.sigma[k]},
                         {"displacements", points_json(m.displacements)}});
    }
    return {{"gamma", b.gamma}, {"modes", modes}};
}

ModeBasis modes_from_json(const json& j) {
    return parsing("modes", [&] {
        ModeBasis b;
        b.gamma = j.value("gamma", 0.1);
        for (const json& m : j.at("modes")) {
            Mode mode;
            mode.role = mode_role_from_string(m.at("role").get<std::string>());
            mode.divergence_class = divergence_class_from_string(m.value("divergence_class", std::string("general")));
            mode.displacements = points_from(m.at("displacements"));
            b.modes.push_back(std::move(mode));
            b.sigma.push_back(m.value("sigma", 1.0));
        }
        return b;
    });
}

ModeBasis load_modes(const fs::path& path) { return modes_from_json(read_json(path)); }
void save_modes(const ModeBasis& b, const fs::path& path) { write_json(path, to_json(b)); }

json to_json(const Polygon& p) { return points_json(p); }

Polygon polygon_from_json(const json& j) {
    return parsing("contour", [&] { return points_from(j.is_object() ? j.at("contour") : j); });
}

Polygon load_contour(const fs::path& path) { return polygon_from_json(read_json(path)); }

std::vector<double> load_lambda(const fs::path& path) {
    const json j = read_json(path);
    return parsing("lambda", [&] {
        return (j.is_object() ? j.at("lambda") : j).get<std::vector<double>>();
    });
}

LambdaBox box_from_json(const json& j, std::vector<std::size_t>* grid) {
    return parsing("region", [&] {
        LambdaBox b;
        b.lower = j.at("lower").get<std::vector<double>>();
        b.upper = j.at("upper").get<std::vector<double>>();
        if (grid && j.contains("grid")) *grid = j.at("grid").get<std::vector<std::size_t>>();
        b.validate();
        return b;
    });
}

LambdaBox load_region(const fs::path& path, std::vector<std::size_t>* grid) {
    return box_from_json(read_json(path), grid);
}

} // namespace wmseg::io
