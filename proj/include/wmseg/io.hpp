#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wmseg/measure.hpp"
#include "wmseg/modes.hpp"
#include "wmseg/optimize_alt.hpp"
#include "wmseg/transport.hpp"

namespace wmseg::io {

using nlohmann::json;
namespace fs = std::filesystem;

// Missing files raise Error("io.missing"); malformed content raises Error("io.parse").
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);
json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& j);

json to_json(const TemplateShape& t);
TemplateShape template_from_json(const json& j);
TemplateShape load_template(const fs::path& path);
void save_template(const TemplateShape& t, const fs::path& path);

json to_json(const ImageDomain& d);
ImageDomain image_from_json(const json& j);
// JSON (points/capacities/features[/adjacency]) or 8-bit PGM: one point per
// pixel at (column, row), capacity 1, feature intensity / 255, 4-neighbour adjacency.
ImageDomain load_image(const fs::path& path);

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

GrayImage read_pgm(const fs::path& path);
void write_pgm(const GrayImage& img, const fs::path& path);
ImageDomain image_from_gray(const GrayImage& img);

// Mask as PGM with 255 = foreground.
void write_mask(std::span<const std::uint8_t> mask, std::size_t width, std::size_t height, const fs::path& path);
std::vector<std::uint8_t> read_mask(const fs::path& path, std::size_t* width = nullptr, std::size_t* height = nullptr);

// CSV rows j,j',a (an optional header line is skipped).
std::vector<Edge> load_adjacency_csv(const fs::path& path, std::size_t node_count);
void save_adjacency_csv(std::span<const Edge> edges, const fs::path& path);

// CSV rows i,j,mass with j = -1 for overflow.
void save_coupling_csv(const Coupling& pi, const fs::path& path);
Coupling load_coupling_csv(const fs::path& path);

// CSV header iteration,lambda_0..,energy,backend,step.
void save_trace_csv(std::span<const TraceRow> trace, const fs::path& path);

json to_json(const ModeBasis& b);
ModeBasis modes_from_json(const json& j);
ModeBasis load_modes(const fs::path& path);
void save_modes(const ModeBasis& b, const fs::path& path);

// Either [[x,y],...] or {"contour": [[x,y],...]}.
Polygon load_contour(const fs::path& path);
json to_json(const Polygon& p);
Polygon polygon_from_json(const json& j);

// Either [l0,l1,...] or {"lambda": [...]}.
std::vector<double> load_lambda(const fs::path& path);

// {"lower": [...], "upper": [...], optional "grid": [...]}
LambdaBox box_from_json(const json& j, std::vector<std::size_t>* grid = nullptr);
LambdaBox load_region(const fs::path& path, std::vector<std::size_t>* grid = nullptr);

} // namespace wmseg::io
