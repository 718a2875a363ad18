#pragma once

// Finite-n realisations of the spiked matrix-tensor model.
//
// Only the Gaussian noise is stored: the spike enters the loss analytically through the
// overlap m (see loss.hpp). Couplings of each channel are stored as float standard-normal
// draws z_e with one double scale per channel, coupling_e = scale * z_e. Edges are grouped
// by their smallest index (CSR layout); the remaining indices are ascending uint16, which
// bounds n by 65535.
//
// Noise variances: a tensor edge carries (p-1)! / (Delta_p n^(p-1)) and a matrix edge
// 1 / (Delta_2 n), which gives Cov[L(a), L(b)] = n Q(<a,b>/n) when every tuple is present.
// Diluted instances keep a subset of the tuples and multiply each channel variance by
// (#dense tuples) / (#kept tuples) so the first two moments of the loss are unchanged.

#include "errors.hpp"
#include "model.hpp"

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace smt {

inline constexpr std::uint32_t kMaxInstanceSize = 65535;

struct EdgeSet {
    int arity = 0;
    std::vector<std::uint64_t> row_ptr;  // n + 1 offsets into the edge arrays
    std::vector<std::uint16_t> tail;     // arity - 1 ascending indices per edge
    std::vector<float> z;                // standard-normal draw per edge
    double scale = 0.0;                  // coupling = scale * z

    std::uint64_t size() const { return z.size(); }

    /// Calls f(indices, coupling) with the full ascending index tuple of every edge.
    template <class F>
    void for_each(F&& f) const {
        std::array<std::uint32_t, 32> idx{};
        const int t = arity - 1;
        const std::size_t rows = row_ptr.empty() ? 0 : row_ptr.size() - 1;
        for (std::size_t i = 0; i < rows; ++i) {
            idx[0] = static_cast<std::uint32_t>(i);
            for (std::uint64_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
                for (int r = 0; r < t; ++r) idx[r + 1] = tail[e * t + r];
                f(std::span<const std::uint32_t>(idx.data(), static_cast<std::size_t>(arity)),
                  scale * static_cast<double>(z[e]));
            }
        }
    }
};

struct DilutionInfo {
    bool diluted = false;
    std::uint64_t tensor_edges = 0;
    std::uint64_t matrix_edges = 0;
    std::uint64_t dense_tensor_edges = 0;
    std::uint64_t dense_matrix_edges = 0;
    double tensor_variance_factor = 1.0;
    double matrix_variance_factor = 1.0;
};

struct Instance {
    ModelParams params;
    std::uint32_t n = 0;
    std::uint64_t seed = 0;
    std::vector<double> signal;  // squared norm n
    EdgeSet tensor;
    EdgeSet matrix;
    DilutionInfo dilution;
};

struct GenerateOptions {
    bool diluted = false;
    /// Overrides for diluted edge counts (defaults n^2 and floor(n^{3/2})).
    std::optional<std::uint64_t> tensor_edges;
    std::optional<std::uint64_t> matrix_edges;
    /// Drop the noise entirely; the loss reduces to the spike terms.
    bool noiseless = false;
};

namespace detail {

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
        if (r > std::numeric_limits<std::uint64_t>::max()) {
            throw ConfigError("binomial coefficient overflows 64 bits");
        }
    }
    return static_cast<std::uint64_t>(r);
}

inline double factorial(int k) {
    double r = 1.0;
    for (int i = 2; i <= k; ++i) r *= i;
    return r;
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), 0x5eedu};
    return std::mt19937_64(seq);
}

/// Lexicographic successor of an ascending tuple over [0, n). Returns false past the last tuple.
inline bool next_combination(std::span<std::uint32_t> c, std::uint32_t n) {
    const int k = static_cast<int>(c.size());
    int i = k - 1;
    while (i >= 0 && c[i] == n - k + i) --i;
    if (i < 0) return false;
    ++c[i];
    for (int j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
    return true;
}

/// Knuth's selection sampling: visits [0, population) once and keeps exactly `want` of them,
/// every subset equally likely, in increasing order.
template <class Keep>
void selection_sample(std::uint64_t population, std::uint64_t want, std::mt19937_64& rng, Keep&& keep) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uint64_t chosen = 0;
    for (std::uint64_t r = 0; r < population && chosen < want; ++r) {
        const double remaining = static_cast<double>(population - r);
        if (remaining * u(rng) < static_cast<double>(want - chosen)) {
            keep(r);
            ++chosen;
        }
    }
}

/// `want` distinct values of [0, population), sorted.
inline std::vector<std::uint64_t> distinct_ranks(std::uint64_t population, std::uint64_t want,
                                                 std::mt19937_64& rng) {
    std::vector<std::uint64_t> out;
    out.reserve(want);
    if (want * 4 > population) {
        selection_sample(population, want, rng, [&](std::uint64_t r) { out.push_back(r); });
        return out;
    }
    // order statistics of `want` iid uniforms from normalized exponential spacings, so the
    // draw comes out sorted; collisions are dropped and redrawn
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> cum(want);
    double s = 0.0;
    for (auto& c : cum) {
        s -= std::log1p(-u(rng));
        c = s;
    }
    s -= std::log1p(-u(rng));
    const double scale = static_cast<double>(population) / s;
    for (double c : cum) {
        const auto r = std::min(population - 1, static_cast<std::uint64_t>(c * scale));
        if (out.empty() || out.back() != r) out.push_back(r);
    }
    std::uniform_int_distribution<std::uint64_t> pick(0, population - 1);
    while (out.size() < want) {
        const std::uint64_t r = pick(rng);
        const auto it = std::lower_bound(out.begin(), out.end(), r);
        if (it == out.end() || *it != r) out.insert(it, r);
    }
    return out;
}

/// Pair (a < b) of [0, m) with lexicographic rank r.
inline std::pair<std::uint64_t, std::uint64_t> unrank_pair(std::uint64_t r, std::uint64_t m) {
    auto before = [m](std::uint64_t a) { return a * m - a * (a + 1) / 2; };
    const double mm = static_cast<double>(m) - 0.5;
    double est = mm - std::sqrt(std::max(0.0, mm * mm - 2.0 * static_cast<double>(r)));
    std::uint64_t a = est > 0 ? static_cast<std::uint64_t>(est) : 0;
    if (a >= m) a = m - 1;
    while (a > 0 && before(a) > r) --a;
    while (a + 1 < m && before(a + 1) <= r) ++a;
    return {a, a + 1 + (r - before(a))};
}

inline void check_index_range(std::uint32_t n) {
    if (n > kMaxInstanceSize) {
        throw ConfigError("instance size n must be <= 65535 (uint16 edge indices)");
    }
}

/// Every ascending `arity`-tuple of [0, n), or a uniformly random subset of `keep` of them.
inline EdgeSet enumerate_edges(std::uint32_t n, int arity, std::optional<std::uint64_t> keep,
                               std::mt19937_64& rng) {
    EdgeSet set;
    set.arity = arity;
    set.row_ptr.assign(n + 1, 0);
    const std::uint64_t total = binomial(n, arity);
    const std::uint64_t target = keep.value_or(total);
    set.tail.reserve(target * (arity - 1));
    std::vector<std::uint32_t> c(arity);
    for (int i = 0; i < arity; ++i) c[i] = i;
    std::vector<std::uint64_t> counts(n, 0);
    auto push = [&] {
        ++counts[c[0]];
        for (int r = 1; r < arity; ++r) set.tail.push_back(static_cast<std::uint16_t>(c[r]));
    };
    if (!keep) {
        do {
            push();
        } while (next_combination(c, n));
    } else {
        std::uint64_t pos = 0;
        selection_sample(total, target, rng, [&](std::uint64_t r) {
            while (pos < r) {
                next_combination(c, n);
                ++pos;
            }
            push();
        });
    }
    for (std::uint32_t i = 0; i < n; ++i) set.row_ptr[i + 1] = set.row_ptr[i] + counts[i];
    return set;
}

/// Uniformly random subset of `keep` tuples for arity 2 or 3 without touching the whole
/// tuple space: per-leading-index counts are drawn sequentially (binomial given the
/// remaining population), then distinct tuples are drawn inside each row.
inline EdgeSet stratified_edges(std::uint32_t n, int arity, std::uint64_t keep, std::mt19937_64& rng) {
    if (arity != 2 && arity != 3) {
        throw ConfigError("stratified edge sampling supports arity 2 and 3 only");
    }
    EdgeSet set;
    set.arity = arity;
    set.row_ptr.assign(n + 1, 0);
    std::vector<std::uint64_t> row_size(n, 0);
    for (std::uint32_t i = 0; i < n; ++i) row_size[i] = binomial(n - 1 - i, arity - 1);
    std::vector<std::uint64_t> counts(n, 0);
    std::uint64_t remaining_pop = binomial(n, arity);
    std::uint64_t remaining = keep;
    for (std::int64_t i = static_cast<std::int64_t>(n) - 1; i >= 0 && remaining > 0; --i) {
        const std::uint64_t size = row_size[i];
        if (size == 0) continue;
        std::uint64_t c;
        if (i == 0) {
            c = remaining;
        } else {
            std::binomial_distribution<std::uint64_t> draw(
                remaining, static_cast<double>(size) / static_cast<double>(remaining_pop));
            c = draw(rng);
        }
        c = std::min(c, size);
        counts[i] = c;
        remaining -= c;
        remaining_pop -= size;
    }
    if (remaining != 0) throw ConfigError("edge sampling could not place all requested tuples");

    set.tail.reserve(keep * (arity - 1));
    for (std::uint32_t i = 0; i < n; ++i) {
        set.row_ptr[i + 1] = set.row_ptr[i] + counts[i];
        if (counts[i] == 0) continue;
        const std::uint64_t m = n - 1 - i;
        for (std::uint64_t r : distinct_ranks(row_size[i], counts[i], rng)) {
            if (arity == 2) {
                set.tail.push_back(static_cast<std::uint16_t>(i + 1 + r));
            } else {
                auto [a, b] = unrank_pair(r, m);
                set.tail.push_back(static_cast<std::uint16_t>(i + 1 + a));
                set.tail.push_back(static_cast<std::uint16_t>(i + 1 + b));
            }
        }
    }
    return set;
}

inline void draw_couplings(EdgeSet& set, std::mt19937_64& rng) {
    boost::random::normal_distribution<double> normal(0.0, 1.0);  // ziggurat
    const std::uint64_t count = set.row_ptr.empty() ? 0 : set.row_ptr.back();
    set.z.resize(count);
    for (auto& v : set.z) v = static_cast<float>(normal(rng));
}

inline EdgeSet empty_edges(std::uint32_t n, int arity) {
    EdgeSet set;
    set.arity = arity;
    set.row_ptr.assign(n + 1, 0);
    return set;
}

/// Tuple populations up to this size are subsampled exactly by a full selection pass.
inline constexpr std::uint64_t kExactSamplingLimit = std::uint64_t{1} << 26;

inline EdgeSet sample_edges(std::uint32_t n, int arity, std::uint64_t keep, std::mt19937_64& rng) {
    const std::uint64_t total = binomial(n, arity);
    if (keep > total) {
        throw ConfigError("requested " + std::to_string(keep) + " distinct " + std::to_string(arity) +
                          "-tuples but only " + std::to_string(total) + " exist");
    }
    if (total <= kExactSamplingLimit) return enumerate_edges(n, arity, keep, rng);
    return stratified_edges(n, arity, keep, rng);
}

inline std::vector<double> sphere_point(std::uint32_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(n);
    double s = 0.0;
    for (auto& x : v) {
        x = normal(rng);
        s += x * x;
    }
    const double f = std::sqrt(static_cast<double>(n) / s);
    for (auto& x : v) x *= f;
    return v;
}

}  // namespace detail

/// Default diluted edge counts: n^2 tensor tuples and floor(n^{3/2}) matrix pairs.
inline std::uint64_t default_diluted_tensor_edges(std::uint32_t n) {
    return static_cast<std::uint64_t>(n) * n;
}
inline std::uint64_t default_diluted_matrix_edges(std::uint32_t n) {
    return static_cast<std::uint64_t>(std::floor(std::pow(static_cast<double>(n), 1.5)));
}

inline Instance generate_instance(const ModelParams& params, std::uint32_t n, std::uint64_t seed,
                                  const GenerateOptions& options) {
    params.validate();
    detail::check_index_range(n);
    if (n < static_cast<std::uint32_t>(params.p)) {
        throw ConfigError("instance size n must be >= p");
    }
    Instance inst;
    inst.params = params;
    inst.n = n;
    inst.seed = seed;

    auto signal_rng = detail::make_stream(seed, 1);
    inst.signal = detail::sphere_point(n, signal_rng);

    const std::uint64_t dense_t = detail::binomial(n, params.p);
    const std::uint64_t dense_m = detail::binomial(n, 2);
    DilutionInfo& info = inst.dilution;
    info.diluted = options.diluted;
    info.dense_tensor_edges = dense_t;
    info.dense_matrix_edges = dense_m;

    const double nd = static_cast<double>(n);
    const double base_var_t = detail::factorial(params.p - 1) / (params.delta_p * std::pow(nd, params.p - 1));
    const double base_var_m = 1.0 / (params.delta_2 * nd);

    if (options.noiseless) {
        inst.tensor = detail::empty_edges(n, params.p);
        inst.matrix = detail::empty_edges(n, 2);
        return inst;
    }

    auto tensor_rng = detail::make_stream(seed, 2);
    auto matrix_rng = detail::make_stream(seed, 3);
    if (options.diluted) {
        if (params.p != 3) {
            throw ConfigError("diluted instances are defined for p = 3 only");
        }
        const std::uint64_t kt = options.tensor_edges.value_or(default_diluted_tensor_edges(n));
        const std::uint64_t km = options.matrix_edges.value_or(default_diluted_matrix_edges(n));
        const double floor_count = std::pow(nd, params.p - 1);
        if (static_cast<double>(kt) < floor_count) {
            throw ConfigError("diluted tensor edge count " + std::to_string(kt) +
                              " is below the n^(p-1) floor; the spherical dynamics would condense on few edges");
        }
        if (kt >= dense_t) {
            throw ConfigError("diluted mode needs fewer tensor edges than the dense C(n,p) = " +
                              std::to_string(dense_t) + "; increase n or use dense mode");
        }
        if (km == 0 || km > dense_m) {
            throw ConfigError("diluted matrix edge count must lie in [1, C(n,2)]");
        }
        inst.tensor = detail::sample_edges(n, params.p, kt, tensor_rng);
        inst.matrix = detail::sample_edges(n, 2, km, matrix_rng);
        info.tensor_variance_factor = static_cast<double>(dense_t) / static_cast<double>(kt);
        info.matrix_variance_factor = static_cast<double>(dense_m) / static_cast<double>(km);
    } else {
        if (dense_t > (std::uint64_t{1} << 31)) {
            throw ConfigError("dense instance would hold " + std::to_string(dense_t) +
                              " tensor tuples; use diluted mode");
        }
        inst.tensor = detail::enumerate_edges(n, params.p, std::nullopt, tensor_rng);
        inst.matrix = detail::enumerate_edges(n, 2, std::nullopt, matrix_rng);
    }
    detail::draw_couplings(inst.tensor, tensor_rng);
    detail::draw_couplings(inst.matrix, matrix_rng);
    info.tensor_edges = inst.tensor.size();
    info.matrix_edges = inst.matrix.size();
    inst.tensor.scale = std::sqrt(base_var_t * info.tensor_variance_factor);
    inst.matrix.scale = std::sqrt(base_var_m * info.matrix_variance_factor);
    return inst;
}

inline Instance generate_instance(const ModelParams& params, std::uint32_t n, std::uint64_t seed,
                                  bool diluted) {
    GenerateOptions options;
    options.diluted = diluted;
    return generate_instance(params, n, seed, options);
}

// ---------------------------------------------------------------------------------------------
// Binary edge-list format (little endian), version 1:
//
//   offset  type       field
//   0       char[8]    magic "SMTINST1"
//   8       u32        n
//   12      u32        p
//   16      f64        delta_p
//   24      f64        delta_2
//   32      u64        seed
//   40      u8         diluted flag
//   41      u8[7]      zero padding
//   48      u64        tensor edge count  Et
//   56      u64        matrix edge count  Em
//   64      f64        tensor coupling scale
//   72      f64        matrix coupling scale
//   80      f64[n]     signal
//   ...     Et records { u16[p] ascending indices, f32 z }
//   ...     Em records { u16[2] ascending indices, f32 z }
//
// coupling = scale * z. Records are in lexicographic order of their index tuples.
// ---------------------------------------------------------------------------------------------

namespace detail {

static_assert(std::endian::native == std::endian::little, "instance I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ConfigError("instance file truncated");
    return v;
}

inline void write_edges(std::ostream& out, const EdgeSet& set) {
    const int t = set.arity - 1;
    const std::size_t rows = set.row_ptr.size() - 1;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::uint64_t e = set.row_ptr[i]; e < set.row_ptr[i + 1]; ++e) {
            put(out, static_cast<std::uint16_t>(i));
            for (int r = 0; r < t; ++r) put(out, set.tail[e * t + r]);
            put(out, set.z[e]);
        }
    }
}

inline EdgeSet read_edges(std::istream& in, std::uint32_t n, int arity, std::uint64_t count, double scale) {
    EdgeSet set;
    set.arity = arity;
    set.scale = scale;
    set.row_ptr.assign(n + 1, 0);
    set.tail.reserve(count * (arity - 1));
    set.z.reserve(count);
    std::vector<std::uint64_t> counts(n, 0);
    std::vector<std::uint16_t> prev(arity, 0);
    for (std::uint64_t e = 0; e < count; ++e) {
        std::vector<std::uint16_t> idx(arity);
        for (auto& v : idx) v = get<std::uint16_t>(in);
        for (int r = 0; r < arity; ++r) {
            if (idx[r] >= n || (r > 0 && idx[r] <= idx[r - 1])) {
                throw ConfigError("instance file has an invalid index tuple");
            }
        }
        if (e > 0 && !std::lexicographical_compare(prev.begin(), prev.end(), idx.begin(), idx.end())) {
            throw ConfigError("instance file edges are not strictly increasing");
        }
        prev = idx;
        ++counts[idx[0]];
        for (int r = 1; r < arity; ++r) set.tail.push_back(idx[r]);
        set.z.push_back(get<float>(in));
    }
    for (std::uint32_t i = 0; i < n; ++i) set.row_ptr[i + 1] = set.row_ptr[i] + counts[i];
    return set;
}

}  // namespace detail

inline void write_instance(const Instance& inst, std::ostream& out) {
    out.write("SMTINST1", 8);
    detail::put(out, inst.n);
    detail::put(out, static_cast<std::uint32_t>(inst.params.p));
    detail::put(out, inst.params.delta_p);
    detail::put(out, inst.params.delta_2);
    detail::put(out, inst.seed);
    detail::put(out, static_cast<std::uint8_t>(inst.dilution.diluted ? 1 : 0));
    const std::array<char, 7> pad{};
    out.write(pad.data(), pad.size());
    detail::put(out, inst.tensor.size());
    detail::put(out, inst.matrix.size());
    detail::put(out, inst.tensor.scale);
    detail::put(out, inst.matrix.scale);
    for (double s : inst.signal) detail::put(out, s);
    detail::write_edges(out, inst.tensor);
    detail::write_edges(out, inst.matrix);
    if (!out) throw ConfigError("failed to write instance");
}

inline Instance read_instance(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || std::memcmp(magic.data(), "SMTINST1", 8) != 0) {
        throw ConfigError("not an instance file (bad magic)");
    }
    Instance inst;
    inst.n = detail::get<std::uint32_t>(in);
    inst.params.p = static_cast<int>(detail::get<std::uint32_t>(in));
    inst.params.delta_p = detail::get<double>(in);
    inst.params.delta_2 = detail::get<double>(in);
    inst.params.validate();
    detail::check_index_range(inst.n);
    inst.seed = detail::get<std::uint64_t>(in);
    inst.dilution.diluted = detail::get<std::uint8_t>(in) != 0;
    std::array<char, 7> pad{};
    in.read(pad.data(), pad.size());
    const auto et = detail::get<std::uint64_t>(in);
    const auto em = detail::get<std::uint64_t>(in);
    const double st = detail::get<double>(in);
    const double sm = detail::get<double>(in);
    inst.signal.resize(inst.n);
    for (auto& s : inst.signal) s = detail::get<double>(in);
    inst.tensor = detail::read_edges(in, inst.n, inst.params.p, et, st);
    inst.matrix = detail::read_edges(in, inst.n, 2, em, sm);
    auto& info = inst.dilution;
    info.tensor_edges = et;
    info.matrix_edges = em;
    info.dense_tensor_edges = detail::binomial(inst.n, inst.params.p);
    info.dense_matrix_edges = detail::binomial(inst.n, 2);
    if (info.diluted) {
        info.tensor_variance_factor = static_cast<double>(info.dense_tensor_edges) / static_cast<double>(et);
        info.matrix_variance_factor = static_cast<double>(info.dense_matrix_edges) / static_cast<double>(em);
    }
    return inst;
}

inline void save_instance(const Instance& inst, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path + " for writing");
    write_instance(inst, out);
}

inline Instance load_instance(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    return read_instance(in);
}

}  // namespace smt
