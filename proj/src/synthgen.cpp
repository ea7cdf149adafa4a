#include "tprox/synthgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "tprox/errors.hpp"
#include "tprox/rng.hpp"

namespace tprox {

namespace {

constexpr double kEdgeSoftness = 0.35;  // logistic edge width of rectangles and bars (px)

double smooth_inside(double z) { return 1.0 / (1.0 + std::exp(-z / kEdgeSoftness)); }

// Triangle-wave reflection of v into [lo, hi].
double fold(double v, double lo, double hi) {
    const double len = hi - lo;
    if (len <= 0.0) return 0.5 * (lo + hi);
    double u = std::fmod(v - lo, 2.0 * len);
    if (u < 0.0) u += 2.0 * len;
    if (u > len) u = 2.0 * len - u;
    return lo + u;
}

double render_value(const ClipSpec& s, double dx, double dy, double angle, double scale) {
    const double c = std::cos(angle), sn = std::sin(angle);
    const double u = (c * dx + sn * dy) / scale;
    const double v = (-sn * dx + c * dy) / scale;
    if (s.shape == ShapeKind::gaussian_blob) {
        const double a = s.size_major, b = s.size_minor;
        return s.amplitude * std::exp(-0.5 * (u * u / (a * a) + v * v / (b * b)));
    }
    return s.amplitude * smooth_inside(s.size_major - std::abs(u)) * smooth_inside(s.size_minor - std::abs(v));
}

void put_u16(std::vector<unsigned char>& b, std::uint16_t v) {
    b.push_back(static_cast<unsigned char>(v & 0xff));
    b.push_back(static_cast<unsigned char>(v >> 8));
}
void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) b.push_back(static_cast<unsigned char>((v >> (8 * k)) & 0xff));
}
void put_f32(std::vector<unsigned char>& b, double v) {
    put_u32(b, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

struct Reader {
    const std::vector<unsigned char>& b;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > b.size()) throw IoError("dataset: truncated file");
    }
    std::uint16_t u16() {
        need(2);
        const std::uint16_t v = static_cast<std::uint16_t>(b[pos] | (b[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[pos + k]) << (8 * k);
        pos += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
};

} // namespace

std::string to_string(ShapeKind k) {
    switch (k) {
    case ShapeKind::gaussian_blob: return "gaussian_blob";
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::bar: return "bar";
    }
    return "unknown";
}

double ClipSpec::support_radius() const {
    const double scale = 1.0 + std::abs(breathe);
    if (shape == ShapeKind::gaussian_blob)
        return scale * std::max(size_major, size_minor) * std::sqrt(2.0 * std::log(100.0));
    const double tail = kEdgeSoftness * std::log(99.0);
    return scale * (std::hypot(size_major, size_minor) + tail);
}

Clip render_clip(const ClipSpec& s) {
    if (s.num_frames < 1 || s.height < 1 || s.width < 1 || s.channels < 1)
        throw std::invalid_argument("render_clip: invalid dimensions");
    if (s.speed.size() != static_cast<std::size_t>(s.num_frames - 1))
        throw std::invalid_argument("render_clip: speed profile needs num_frames - 1 entries");
    for (double v : s.speed)
        if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("render_clip: speeds must be finite and >= 0");
    if (!(s.amplitude > 0.0 && s.amplitude <= 1.0)) throw std::invalid_argument("render_clip: amplitude outside (0, 1]");
    const double r = s.support_radius();
    const double lo_x = r, hi_x = s.width - r, lo_y = r, hi_y = s.height - r;
    if (hi_x < lo_x || hi_y < lo_y)
        throw std::invalid_argument("render_clip: shape support does not fit inside the frame");

    const std::size_t n = static_cast<std::size_t>(s.num_frames);
    std::vector<double> cx(n), cy(n), arc(n);
    double px = s.start_x, py = s.start_y, heading = s.heading, travelled = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        cx[k] = fold(px, lo_x, hi_x);
        cy[k] = fold(py, lo_y, hi_y);
        arc[k] = travelled;
        if (k + 1 < n) {
            const double v = s.speed[k];
            px += v * std::cos(heading);
            py += v * std::sin(heading);
            heading += s.turn_rate * v;
            travelled += v;
        }
    }

    Clip clip;
    clip.frames.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        Frame f(s.channels, s.height, s.width);
        const double angle = s.orientation + s.spin * arc[k];
        const double scale = 1.0 + s.breathe * std::sin(0.7 * arc[k]);
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) {
                const double val = render_value(s, x + 0.5 - cx[k], y + 0.5 - cy[k], angle, scale);
                for (int c = 0; c < s.channels; ++c) f.at(c, y, x) = std::clamp(val, 0.0, 1.0);
            }
        }
        clip.frames.push_back(std::move(f));
        if (k + 1 < n) clip.true_displacement.push_back({cx[k + 1] - cx[k], cy[k + 1] - cy[k]});
    }
    return clip;
}

ClipSpec sample_clip_spec(const ClipDistribution& d, std::uint64_t seed, std::uint64_t clip_index) {
    auto rng = CounterRng::keyed(seed, 0xC11Bu, clip_index);
    ClipSpec s;
    s.num_frames = d.num_frames;
    s.height = d.height;
    s.width = d.width;
    s.shape = static_cast<ShapeKind>(rng.below(3));
    s.amplitude = rng.uniform(d.amplitude_min, d.amplitude_max);
    switch (s.shape) {
    case ShapeKind::gaussian_blob:
        s.size_major = rng.uniform(d.blob_sigma_min, d.blob_sigma_max);
        s.size_minor = rng.uniform(d.blob_sigma_min, d.blob_sigma_max);
        break;
    case ShapeKind::rectangle:
        s.size_major = rng.uniform(d.rect_half_min, d.rect_half_max);
        s.size_minor = rng.uniform(d.rect_half_min, d.rect_half_max);
        break;
    case ShapeKind::bar:
        s.size_major = rng.uniform(d.bar_half_length_min, d.bar_half_length_max);
        s.size_minor = rng.uniform(d.bar_half_width_min, d.bar_half_width_max);
        break;
    }
    s.breathe = rng.uniform(0.0, d.max_breathe);
    s.orientation = rng.uniform(0.0, std::numbers::pi);
    s.heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    s.turn_rate = rng.uniform(-d.max_turn_rate, d.max_turn_rate);
    s.spin = rng.uniform(-d.max_spin, d.max_spin);
    s.start_x = rng.uniform(0.0, static_cast<double>(d.width));
    s.start_y = rng.uniform(0.0, static_cast<double>(d.height));
    const double mid = 0.5 * (d.speed_min + d.speed_max);
    double v0 = rng.uniform(d.speed_min, mid);
    double v1 = rng.uniform(mid, d.speed_max);
    if (rng.below(2) == 1) std::swap(v0, v1);
    const int steps = d.num_frames - 1;
    s.speed.resize(static_cast<std::size_t>(std::max(steps, 0)));
    for (int k = 0; k < steps; ++k) {
        const double phase = steps > 1 ? static_cast<double>(k) / (steps - 1) : 0.0;
        s.speed[k] = v0 + (v1 - v0) * 0.5 * (1.0 - std::cos(std::numbers::pi * phase));
    }
    return s;
}

std::size_t Dataset::frame_count() const {
    std::size_t n = 0;
    for (const auto& c : clips) n += c.frames.size();
    return n;
}

Dataset generate_dataset(int n_clips, const ClipDistribution& dist, std::uint64_t seed, std::uint64_t first_index) {
    if (n_clips < 1) throw std::invalid_argument("generate_dataset: n_clips must be >= 1");
    Dataset ds;
    ds.clips.reserve(static_cast<std::size_t>(n_clips));
    for (int i = 0; i < n_clips; ++i)
        ds.clips.push_back(render_clip(sample_clip_spec(dist, seed, first_index + static_cast<std::uint64_t>(i))));
    return ds;
}

std::vector<unsigned char> encode_dataset(const Dataset& ds) {
    std::vector<unsigned char> b;
    b.insert(b.end(), {'T', 'D', 'V', '1'});
    put_u32(b, 1);
    put_u32(b, static_cast<std::uint32_t>(ds.clips.size()));
    for (const auto& clip : ds.clips) {
        const std::uint32_t nf = static_cast<std::uint32_t>(clip.frames.size());
        const Frame proto = nf ? clip.frames.front() : Frame(1, 0, 0);
        if (nf > 0 && clip.true_displacement.size() != nf - 1)
            throw std::invalid_argument("encode_dataset: displacement count must be n_frames - 1");
        put_u32(b, nf);
        put_u16(b, static_cast<std::uint16_t>(proto.height));
        put_u16(b, static_cast<std::uint16_t>(proto.width));
        put_u16(b, static_cast<std::uint16_t>(proto.channels));
        for (const auto& f : clip.frames) {
            require_same_shape(f, proto, "encode_dataset");
            for (double v : f.pixels) put_f32(b, v);
        }
        for (const auto& dsp : clip.true_displacement) {
            put_f32(b, dsp[0]);
            put_f32(b, dsp[1]);
        }
    }
    return b;
}

Dataset decode_dataset(const std::vector<unsigned char>& bytes) {
    Reader r{bytes};
    r.need(4);
    if (std::memcmp(bytes.data(), "TDV1", 4) != 0) throw IoError("dataset: bad magic");
    r.pos = 4;
    if (r.u32() != 1) throw IoError("dataset: unsupported version");
    const std::uint32_t n_clips = r.u32();
    Dataset ds;
    for (std::uint32_t c = 0; c < n_clips; ++c) {
        Clip clip;
        const std::uint32_t nf = r.u32();
        const int h = r.u16(), w = r.u16(), ch = r.u16();
        for (std::uint32_t k = 0; k < nf; ++k) {
            Frame f(ch, h, w);
            for (auto& v : f.pixels) v = r.f32();
            clip.frames.push_back(std::move(f));
        }
        for (std::uint32_t k = 0; k + 1 < nf; ++k) {
            const double dx = r.f32();
            const double dy = r.f32();
            clip.true_displacement.push_back({dx, dy});
        }
        ds.clips.push_back(std::move(clip));
    }
    if (r.pos != bytes.size()) throw IoError("dataset: trailing bytes");
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    const auto bytes = encode_dataset(ds);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_dataset(bytes);
}

WindowIterator::WindowIterator(const Dataset& ds, int K, IterationMode mode, std::uint64_t seed)
    : K_(K), mode_(mode), seed_(seed) {
    if (K < 1) throw std::invalid_argument("iterate_windows: K must be >= 1");
    if (ds.clips.empty()) throw std::invalid_argument("iterate_windows: empty dataset");
    std::uint64_t id = 0;
    clip_items_.resize(ds.clips.size());
    for (std::uint32_t c = 0; c < ds.clips.size(); ++c) {
        const auto nf = static_cast<std::uint32_t>(ds.clips[c].frames.size());
        if (mode == IterationMode::windowed) {
            if (nf < static_cast<std::uint32_t>(K))
                throw std::invalid_argument("iterate_windows: K larger than shortest clip");
            for (std::uint32_t s = 0; s + K <= nf; ++s) items_.push_back({c, s, static_cast<std::uint32_t>(K), id++});
        } else {
            for (std::uint32_t s = 0; s < nf; ++s) {
                clip_items_[c].push_back(static_cast<std::uint32_t>(items_.size()));
                items_.push_back({c, s, 1, id++});
            }
        }
    }
    if (items_.empty()) throw std::invalid_argument("iterate_windows: dataset has no frames");
}

std::vector<WindowRef> WindowIterator::epoch(std::uint64_t epoch_index) const {
    auto rng = CounterRng::keyed(seed_, 0xE90Cu, epoch_index);
    if (mode_ == IterationMode::sequence_preserving) {
        std::vector<std::uint32_t> order(clip_items_.size());
        for (std::uint32_t c = 0; c < order.size(); ++c) order[c] = c;
        rng.shuffle(order);
        std::vector<WindowRef> out;
        out.reserve(items_.size());
        for (auto c : order)
            for (auto idx : clip_items_[c]) out.push_back(items_[idx]);
        return out;
    }
    auto out = items_;
    rng.shuffle(out);
    return out;
}

WindowRef WindowIterator::at(std::uint64_t i, std::uint64_t* epoch_out) const {
    const std::uint64_t n = items_.size();
    const std::uint64_t e = i / n;
    if (e != cached_epoch_) {
        cached_order_ = epoch(e);
        cached_epoch_ = e;
    }
    if (epoch_out) *epoch_out = e;
    return cached_order_[i % n];
}

} // namespace tprox
