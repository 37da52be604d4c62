#include "fido/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fido/png_io.hpp"
#include "fido/rng.hpp"

namespace fido {

void LabeledImageSet::validate() const {
    if (images.size() != labels.size() || images.size() != ids.size() ||
        (!boxes.empty() && boxes.size() != images.size()))
        throw ConfigError("image set '" + split + "': parallel sequences have different lengths");
    for (size_t i = 0; i < images.size(); ++i) {
        const Tensor& img = images[i];
        if (img.ndim() != 3 || img.dim(0) != 3)
            throw ConfigError("image set '" + split + "': image " + ids[i] + " is not (3,H,W)");
        if (labels[i] < 0) throw ConfigError("image set '" + split + "': negative label for " + ids[i]);
        if (!boxes.empty())
            for (const BoundingBox& b : boxes[i]) validate_box(b, img.dim(2), img.dim(1), ids[i]);
    }
}

void ShapesConfig::validate() const {
    if (side < 16) throw ConfigError("shapes: side must be >= 16");
    if (num_classes < 2 || num_classes > 4) throw ConfigError("shapes: num_classes must be in [2,4]");
    if (!(min_scale > 0 && max_scale >= min_scale && max_scale < 1))
        throw ConfigError("shapes: need 0 < min_scale <= max_scale < 1");
    if (train_count <= 0 || heldout_count <= 0 || eval_count <= 0)
        throw ConfigError("shapes: split counts must be positive");
}

namespace {

struct PaintMask {
    std::vector<uint8_t> on;  // side*side
    int side;
    uint8_t& at(int y, int x) { return on[static_cast<size_t>(y) * side + x]; }
};

void paint_shape(PaintMask& m, ShapeClass cls, int x0, int y0, int s) {
    double cy = y0 + (s - 1) / 2.0;
    double cx = x0 + (s - 1) / 2.0;
    switch (cls) {
        case ShapeClass::square:
            for (int y = y0; y < y0 + s; ++y)
                for (int x = x0; x < x0 + s; ++x) m.at(y, x) = 1;
            break;
        case ShapeClass::circle: {
            double r = s / 2.0 - 0.1;
            double r2 = r * r;
            for (int y = y0; y < y0 + s; ++y)
                for (int x = x0; x < x0 + s; ++x)
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r2) m.at(y, x) = 1;
            break;
        }
        case ShapeClass::triangle:
            for (int y = y0; y < y0 + s; ++y) {
                double t = s > 1 ? static_cast<double>(y - y0) / (s - 1) : 1.0;
                double half = t * (s - 1) / 2.0;
                for (int x = x0; x < x0 + s; ++x)
                    if (std::fabs(x - cx) <= half + 1e-9) m.at(y, x) = 1;
            }
            break;
        case ShapeClass::cross: {
            int w = std::max(1, static_cast<int>(std::lround(s / 3.0)));
            int bx = x0 + (s - w) / 2;
            int by = y0 + (s - w) / 2;
            for (int y = y0; y < y0 + s; ++y)
                for (int x = bx; x < bx + w; ++x) m.at(y, x) = 1;
            for (int y = by; y < by + w; ++y)
                for (int x = x0; x < x0 + s; ++x) m.at(y, x) = 1;
            break;
        }
    }
}

LabeledImageSet gen_split(const ShapesConfig& cfg, const std::string& split, uint64_t split_id,
                          int count) {
    LabeledImageSet set;
    set.split = split;
    set.ids.reserve(static_cast<size_t>(count));
    set.images.reserve(static_cast<size_t>(count));
    set.labels.reserve(static_cast<size_t>(count));
    set.boxes.reserve(static_cast<size_t>(count));

    for (int idx = 0; idx < count; ++idx) {
        Rng rng = Rng::derive(cfg.seed, {split_id, static_cast<uint64_t>(idx)});
        int label = idx % cfg.num_classes;  // round-robin keeps classes balanced

        Tensor img({3, cfg.side, cfg.side});
        double base[3];
        for (double& b : base) b = rng.uniform(0.25, 0.75);
        {
            Rng bg_rng = Rng::derive(cfg.seed, {split_id, static_cast<uint64_t>(idx), 1});
            switch (cfg.texture) {
                case BackgroundTexture::noise:
                    for (int y = 0; y < cfg.side; ++y)
                        for (int x = 0; x < cfg.side; ++x)
                            for (int c = 0; c < 3; ++c)
                                img.at(c, y, x) = base[c] + bg_rng.uniform(-0.04, 0.04);
                    break;
                case BackgroundTexture::gradient: {
                    double angle = bg_rng.uniform(0, 2 * M_PI);
                    double dy = std::sin(angle), dx = std::cos(angle);
                    for (int y = 0; y < cfg.side; ++y)
                        for (int x = 0; x < cfg.side; ++x) {
                            double proj = (dy * y + dx * x) / cfg.side;
                            for (int c = 0; c < 3; ++c) img.at(c, y, x) = base[c] + 0.15 * proj;
                        }
                    break;
                }
                case BackgroundTexture::checker:
                    for (int y = 0; y < cfg.side; ++y)
                        for (int x = 0; x < cfg.side; ++x) {
                            double tone = ((y / 4 + x / 4) % 2 == 0) ? 0.06 : -0.06;
                            for (int c = 0; c < 3; ++c) img.at(c, y, x) = base[c] + tone;
                        }
                    break;
            }
        }

        int s = static_cast<int>(std::lround(rng.uniform(cfg.min_scale, cfg.max_scale) * cfg.side));
        s = std::max(3, std::min(s, cfg.side - 2));
        int x0 = 1 + rng.uniform_int(cfg.side - s - 1);
        int y0 = 1 + rng.uniform_int(cfg.side - s - 1);

        // Random vivid color: each channel is pushed toward an extreme, and
        // the draw is repeated until the shape has clear luminance contrast
        // against the background (otherwise some images are near-invisible).
        double col[3];
        auto luminance = [](const double* c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; };
        for (int attempt = 0; attempt < 64; ++attempt) {
            for (int c = 0; c < 3; ++c)
                col[c] = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.12) : rng.uniform(0.88, 1.0);
            if (std::fabs(luminance(col) - luminance(base)) >= 0.25) break;
            if (attempt == 63)
                for (int c = 0; c < 3; ++c) col[c] = base[c] > 0.5 ? 0.0 : 1.0;
        }

        PaintMask mask{std::vector<uint8_t>(static_cast<size_t>(cfg.side) * cfg.side, 0), cfg.side, };
        paint_shape(mask, static_cast<ShapeClass>(label), x0, y0, s);

        int min_x = cfg.side, min_y = cfg.side, max_x = -1, max_y = -1;
        for (int y = 0; y < cfg.side; ++y)
            for (int x = 0; x < cfg.side; ++x)
                if (mask.at(y, x)) {
                    for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
                    min_x = std::min(min_x, x);
                    min_y = std::min(min_y, y);
                    max_x = std::max(max_x, x);
                    max_y = std::max(max_y, y);
                }

        for (long long i = 0; i < img.numel(); ++i) img[i] = std::min(std::max(img[i], 0.0), 1.0);

        char id[32];
        std::snprintf(id, sizeof id, "%s%04d", split.c_str(), idx);
        set.ids.emplace_back(id);
        set.images.push_back(std::move(img));
        set.labels.push_back(label);
        set.boxes.push_back({BoundingBox{min_x, min_y, max_x + 1, max_y + 1}});
    }
    set.validate();
    return set;
}

}  // namespace

ShapesData gen_shapes(const ShapesConfig& cfg) {
    cfg.validate();
    ShapesData data;
    data.train = gen_split(cfg, "train", 0, cfg.train_count);
    data.heldout = gen_split(cfg, "heldout", 1, cfg.heldout_count);
    data.eval = gen_split(cfg, "eval", 2, cfg.eval_count);
    return data;
}

std::array<double, 3> channel_means(const LabeledImageSet& set) {
    if (set.images.empty()) throw ConfigError("channel_means: empty image set");
    std::array<double, 3> sums{0, 0, 0};
    long long per_channel = 0;
    for (const Tensor& img : set.images) {
        long long plane = static_cast<long long>(img.dim(1)) * img.dim(2);
        per_channel += plane;
        for (int c = 0; c < 3; ++c) {
            const double* p = img.data() + c * plane;
            for (long long i = 0; i < plane; ++i) sums[static_cast<size_t>(c)] += p[i];
        }
    }
    for (double& s : sums) s /= static_cast<double>(per_channel);
    return sums;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

uint32_t read_be32(const std::vector<uint8_t>& buf, size_t offset, const std::string& path) {
    if (offset + 4 > buf.size())
        throw ConfigError("idx: " + path + " truncated at byte " + std::to_string(offset));
    return (static_cast<uint32_t>(buf[offset]) << 24) | (static_cast<uint32_t>(buf[offset + 1]) << 16) |
           (static_cast<uint32_t>(buf[offset + 2]) << 8) | static_cast<uint32_t>(buf[offset + 3]);
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("idx: cannot open " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

LabeledImageSet load_idx(const std::string& images_path, const std::string& labels_path) {
    std::vector<uint8_t> ibuf = read_file(images_path);
    std::vector<uint8_t> lbuf = read_file(labels_path);

    if (read_be32(ibuf, 0, images_path) != 0x00000803u)
        throw ConfigError("idx: bad magic in " + images_path + " at byte 0 (want 0x00000803)");
    uint32_t n = read_be32(ibuf, 4, images_path);
    uint32_t rows = read_be32(ibuf, 8, images_path);
    uint32_t cols = read_be32(ibuf, 12, images_path);
    size_t need = 16 + static_cast<size_t>(n) * rows * cols;
    if (ibuf.size() < need)
        throw ConfigError("idx: " + images_path + " truncated at byte " + std::to_string(ibuf.size()) +
                          " (need " + std::to_string(need) + ")");

    if (read_be32(lbuf, 0, labels_path) != 0x00000801u)
        throw ConfigError("idx: bad magic in " + labels_path + " at byte 0 (want 0x00000801)");
    uint32_t ln = read_be32(lbuf, 4, labels_path);
    if (ln != n)
        throw ConfigError("idx: label count " + std::to_string(ln) + " does not match image count " +
                          std::to_string(n));
    if (lbuf.size() < 8 + static_cast<size_t>(ln))
        throw ConfigError("idx: " + labels_path + " truncated at byte " + std::to_string(lbuf.size()));

    LabeledImageSet set;
    set.split = "idx";
    size_t plane = static_cast<size_t>(rows) * cols;
    for (uint32_t i = 0; i < n; ++i) {
        Tensor img({3, static_cast<int>(rows), static_cast<int>(cols)});
        const uint8_t* src = ibuf.data() + 16 + static_cast<size_t>(i) * plane;
        for (size_t p = 0; p < plane; ++p) {
            double v = src[p] / 255.0;
            img[static_cast<long long>(p)] = v;
            img[static_cast<long long>(plane + p)] = v;
            img[static_cast<long long>(2 * plane + p)] = v;
        }
        char id[32];
        std::snprintf(id, sizeof id, "idx%05u", i);
        set.ids.emplace_back(id);
        set.images.push_back(std::move(img));
        set.labels.push_back(static_cast<int>(lbuf[8 + i]));
    }
    set.validate();
    return set;
}

// ---------------------------------------------------------------------------
// saliency CSV

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& tok, const std::string& context) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw ConfigError(context + ": cannot parse number '" + tok + "'");
    if (!std::isfinite(v)) throw ConfigError(context + ": non-finite value '" + tok + "'");
    return v;
}

long parse_int(const std::string& tok, const std::string& context) {
    char* end = nullptr;
    long v = std::strtol(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0')
        throw ConfigError(context + ": cannot parse integer '" + tok + "'");
    return v;
}

}  // namespace

void save_saliency_csv(const SaliencyFile& s, const std::string& path,
                       const std::string& header_comment) {
    if (s.theta.ndim() != 2) throw ConfigError("save_saliency_csv: theta must be 2-D");
    std::ofstream out(path);
    if (!out) throw ConfigError("save_saliency_csv: cannot open " + path + " for writing");
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << s.theta.dim(0) << "," << s.theta.dim(1) << "," << s.out_h << "," << s.out_w << ","
        << s.objective << "\n";
    for (int i = 0; i < s.theta.dim(0); ++i) {
        for (int j = 0; j < s.theta.dim(1); ++j) {
            if (j) out << ",";
            out << fmt17(s.theta.at(i, j));
        }
        out << "\n";
    }
    if (!out) throw ConfigError("save_saliency_csv: write failed for " + path);
}

SaliencyFile load_saliency_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_saliency_csv: cannot open " + path);
    std::string line;
    auto next_line = [&]() {
        while (std::getline(in, line)) {
            if (!line.empty() && line[0] != '#') return true;
        }
        return false;
    };

    if (!next_line()) throw ConfigError("load_saliency_csv: " + path + " has no header");
    auto header = split_csv_line(line);
    if (header.size() != 5)
        throw ConfigError("load_saliency_csv: " + path + " header needs h,w,out_h,out_w,objective");
    SaliencyFile s;
    long h = parse_int(header[0], path);
    long w = parse_int(header[1], path);
    s.out_h = static_cast<int>(parse_int(header[2], path));
    s.out_w = static_cast<int>(parse_int(header[3], path));
    s.objective = header[4];
    if (h <= 0 || w <= 0 || s.out_h <= 0 || s.out_w <= 0)
        throw ConfigError("load_saliency_csv: " + path + " has non-positive dimensions");
    if (s.objective != "ssr" && s.objective != "sdr")
        throw ConfigError("load_saliency_csv: " + path + " has unknown objective '" + s.objective + "'");

    Tensor theta({static_cast<int>(h), static_cast<int>(w)});
    for (long i = 0; i < h; ++i) {
        if (!next_line())
            throw ConfigError("load_saliency_csv: " + path + " ends before row " + std::to_string(i));
        auto toks = split_csv_line(line);
        if (static_cast<long>(toks.size()) != w)
            throw ConfigError("load_saliency_csv: " + path + " row " + std::to_string(i) + " has " +
                              std::to_string(toks.size()) + " values, header says " + std::to_string(w));
        for (long j = 0; j < w; ++j) theta.at(static_cast<int>(i), static_cast<int>(j)) = parse_double(toks[static_cast<size_t>(j)], path);
    }
    s.theta = std::move(theta);
    return s;
}

// ---------------------------------------------------------------------------
// boxes CSV

std::map<std::string, std::vector<BoundingBox>> load_boxes_csv(const std::string& path, int width,
                                                               int height) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_boxes_csv: cannot open " + path);
    std::map<std::string, std::vector<BoundingBox>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto toks = split_csv_line(line);
        if (toks.size() == 5 && toks[0] == "image_id" && toks[1] == "x_min") continue;  // header row
        if (toks.size() != 5)
            throw ConfigError("load_boxes_csv: " + path + " line " + std::to_string(line_no) +
                              ": need image_id,x_min,y_min,x_max,y_max");
        std::string ctx = path + " line " + std::to_string(line_no);
        BoundingBox b;
        b.x_min = static_cast<int>(parse_int(toks[1], ctx));
        b.y_min = static_cast<int>(parse_int(toks[2], ctx));
        b.x_max = static_cast<int>(parse_int(toks[3], ctx));
        b.y_max = static_cast<int>(parse_int(toks[4], ctx));
        validate_box(b, width, height, ctx);
        out[toks[0]].push_back(b);
    }
    return out;
}

void save_boxes_csv(const LabeledImageSet& set, const std::string& path,
                    const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_boxes_csv: cannot open " + path + " for writing");
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "image_id,x_min,y_min,x_max,y_max\n";
    for (size_t i = 0; i < set.size(); ++i)
        for (const BoundingBox& b : set.boxes[i])
            out << set.ids[i] << "," << b.x_min << "," << b.y_min << "," << b.x_max << "," << b.y_max
                << "\n";
}

// ---------------------------------------------------------------------------
// heatmaps

std::array<double, 3> red_blue_colormap(double v) { return {v, 0.0, 1.0 - v}; }

void render_heatmap(const Tensor& saliency, const Tensor& image, const std::string& gray_path,
                    const std::string& overlay_path) {
    if (saliency.ndim() != 2) throw ConfigError("render_heatmap: saliency must be (H,W)");
    if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) != saliency.dim(0) ||
        image.dim(2) != saliency.dim(1))
        throw ConfigError("render_heatmap: image shape " + image.shape_str() +
                          " does not match saliency " + saliency.shape_str());
    int H = saliency.dim(0), W = saliency.dim(1);
    for (long long i = 0; i < saliency.numel(); ++i)
        if (saliency[i] < 0.0 || saliency[i] > 1.0)
            throw ConfigError("render_heatmap: saliency values must lie in [0,1]");

    auto quantize = [](double v) {
        return static_cast<uint8_t>(std::lround(std::min(std::max(v, 0.0), 1.0) * 255.0));
    };

    PngImage gray;
    gray.width = W;
    gray.height = H;
    gray.channels = 1;
    gray.pixels.resize(static_cast<size_t>(W) * H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            gray.pixels[static_cast<size_t>(y) * W + x] = quantize(saliency.at(y, x));
    write_png(gray_path, gray);

    PngImage over;
    over.width = W;
    over.height = H;
    over.channels = 3;
    over.pixels.resize(static_cast<size_t>(W) * H * 3);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            auto cmap = red_blue_colormap(saliency.at(y, x));
            for (int c = 0; c < 3; ++c) {
                double blended = 0.5 * image.at(c, y, x) + 0.5 * cmap[static_cast<size_t>(c)];
                over.pixels[(static_cast<size_t>(y) * W + x) * 3 + static_cast<size_t>(c)] =
                    quantize(blended);
            }
        }
    write_png(overlay_path, over);
}

}  // namespace fido
