#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "brl/core.hpp"
#include "brl/random.hpp"

namespace brl {

/// Semantic label groups; the numeric value is the histogram slot and the palette index.
enum class SemanticClass : std::uint8_t {
    Road = 0,
    RoadLine = 1,
    OffRoad = 2,
    StaticObject = 3,
    DynamicObject = 4,
};

inline constexpr double kRoadLineWeight = 20.0;
inline constexpr std::size_t kDefaultMapWidth = 60;
inline constexpr std::size_t kDefaultMapHeight = 80;

/// Row-major label image. Row 0 is the far edge of the view, column 0 the left edge.
class SemanticMap {
public:
    SemanticMap() : SemanticMap(kDefaultMapWidth, kDefaultMapHeight) {}
    SemanticMap(std::size_t width, std::size_t height, SemanticClass fill = SemanticClass::Road)
        : width_(width), height_(height), cells_(width * height, fill) {
        if (width == 0 || height == 0 || width % 3 != 0 || height % 2 != 0) {
            throw std::invalid_argument("SemanticMap: width must be a positive multiple of 3 and "
                                        "height a positive multiple of 2");
        }
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return cells_.size(); }

    SemanticClass at(std::size_t row, std::size_t col) const { return cells_.at(row * width_ + col); }
    SemanticClass& at(std::size_t row, std::size_t col) { return cells_.at(row * width_ + col); }

    const std::vector<SemanticClass>& cells() const noexcept { return cells_; }
    std::vector<SemanticClass>& cells() noexcept { return cells_; }

    friend bool operator==(const SemanticMap&, const SemanticMap&) = default;

private:
    std::size_t width_;
    std::size_t height_;
    std::vector<SemanticClass> cells_;
};

/// Region index in state order: near-left, near-center, near-right, far-left, far-center, far-right.
inline std::size_t region_of(const SemanticMap& map, std::size_t row, std::size_t col) {
    const std::size_t third = col / (map.width() / 3);
    const bool near = row >= map.height() / 2;
    return (near ? 0 : 3) + third;
}

/// Six weighted class histograms, concatenated region-major and l1-normalized as a whole.
inline StateVector extract_state(const SemanticMap& map) {
    StateVector s{};
    const std::size_t col_block = map.width() / 3;
    const std::size_t half = map.height() / 2;
    for (std::size_t row = 0; row < map.height(); ++row) {
        const std::size_t base = row >= half ? 0 : 3;
        for (std::size_t col = 0; col < map.width(); ++col) {
            const std::size_t region = base + col / col_block;
            const auto cls = static_cast<std::size_t>(map.at(row, col));
            s[region * kClasses + cls] += 1.0;
        }
    }
    double total = 0.0;
    for (std::size_t r = 0; r < kRegions; ++r) {
        s[r * kClasses + static_cast<std::size_t>(SemanticClass::RoadLine)] *= kRoadLineWeight;
    }
    for (double v : s) {
        total += v;
    }
    // every pixel carries a class, so the norm is at least 1
    for (double& v : s) {
        v /= total;
    }
    return s;
}

/// Fraction of pixels labelled Road.
inline double road_view(const SemanticMap& map) {
    std::size_t road = 0;
    for (SemanticClass c : map.cells()) {
        road += c == SemanticClass::Road ? 1 : 0;
    }
    return static_cast<double>(road) / static_cast<double>(map.size());
}

/// Parameters of the segmentation-error model standing in for an estimated segmentation.
struct NoiseConfig {
    double flip_prob = 0.0;
    double blob_rate = 0.0;
    std::size_t blob_size = 16;

    bool active() const noexcept { return flip_prob > 0.0 || blob_rate > 0.0; }

    void validate() const {
        if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
            throw ConfigError("noise.flip_prob", "must lie in [0, 1]");
        }
        if (!(blob_rate >= 0.0) || !std::isfinite(blob_rate)) {
            throw ConfigError("noise.blob_rate", "must be non-negative");
        }
        if (blob_size == 0) {
            throw ConfigError("noise.blob_size", "must be positive");
        }
    }

    friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

/// Applies per-pixel class flips, then stamps Poisson(blob_rate) square object blobs.
inline SemanticMap corrupt(const SemanticMap& map, const NoiseConfig& cfg, Rng& rng) {
    cfg.validate();
    SemanticMap out = map;
    if (cfg.flip_prob > 0.0) {
        for (SemanticClass& c : out.cells()) {
            if (rng.bernoulli(cfg.flip_prob)) {
                // uniform over the four other classes
                const auto shift = 1 + rng.below(kClasses - 1);
                c = static_cast<SemanticClass>((static_cast<std::size_t>(c) + shift) % kClasses);
            }
        }
    }
    const std::uint64_t blobs = rng.poisson(cfg.blob_rate);
    const auto side = static_cast<std::size_t>(
        std::max(1.0, std::round(std::sqrt(static_cast<double>(cfg.blob_size)))));
    for (std::uint64_t b = 0; b < blobs; ++b) {
        const std::size_t row0 = rng.below(out.height());
        const std::size_t col0 = rng.below(out.width());
        const SemanticClass cls =
            rng.bernoulli(0.5) ? SemanticClass::StaticObject : SemanticClass::DynamicObject;
        for (std::size_t r = row0; r < std::min(out.height(), row0 + side); ++r) {
            for (std::size_t c = col0; c < std::min(out.width(), col0 + side); ++c) {
                out.at(r, c) = cls;
            }
        }
    }
    return out;
}

/// Debug text form: one line per row, one palette digit (0-4) per pixel.
inline std::string to_text(const SemanticMap& map) {
    std::string out;
    out.reserve(map.size() + map.height());
    for (std::size_t row = 0; row < map.height(); ++row) {
        for (std::size_t col = 0; col < map.width(); ++col) {
            out.push_back(static_cast<char>('0' + static_cast<int>(map.at(row, col))));
        }
        out.push_back('\n');
    }
    return out;
}

inline SemanticMap map_from_text(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream is(text);
    for (std::string line; std::getline(is, line);) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    if (lines.empty()) {
        throw std::invalid_argument("map_from_text: no rows");
    }
    SemanticMap map(lines.front().size(), lines.size());
    for (std::size_t row = 0; row < lines.size(); ++row) {
        if (lines[row].size() != map.width()) {
            throw std::invalid_argument("map_from_text: ragged row " + std::to_string(row));
        }
        for (std::size_t col = 0; col < map.width(); ++col) {
            const int v = lines[row][col] - '0';
            if (v < 0 || v >= static_cast<int>(kClasses)) {
                throw std::invalid_argument("map_from_text: bad palette index");
            }
            map.at(row, col) = static_cast<SemanticClass>(v);
        }
    }
    return map;
}

/// Binary PGM with the class palette spread over the grey range (0, 63, 127, 191, 255).
inline void write_pgm(std::ostream& os, const SemanticMap& map) {
    os << "P5\n" << map.width() << ' ' << map.height() << "\n255\n";
    static constexpr std::array<unsigned char, kClasses> grey{0, 63, 127, 191, 255};
    for (SemanticClass c : map.cells()) {
        os.put(static_cast<char>(grey[static_cast<std::size_t>(c)]));
    }
}

}  // namespace brl
