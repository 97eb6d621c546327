#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "get/common.hpp"
#include "get/tensor.hpp"

namespace get {

// Named parameter set with stable insertion order. Order determines both the
// traversal order of the optimizer and the layout of checkpoints, so two
// models built by the same code always line up.
class ParamStore {
public:
    std::size_t add(const std::string& name, Tensor value) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index_[name] = entries_.size();
        entries_.push_back({name, std::move(value)});
        return entries_.size() - 1;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }

    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return entries_[it->second].value;
    }

    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return entries_[it->second].value;
    }

    std::size_t size() const { return entries_.size(); }
    const std::string& name(std::size_t i) const { return entries_[i].name; }
    Tensor& value(std::size_t i) { return entries_[i].value; }
    const Tensor& value(std::size_t i) const { return entries_[i].value; }

    std::int64_t total_scalars() const {
        std::int64_t n = 0;
        for (const auto& e : entries_) n += e.value.numel();
        return n;
    }

private:
    struct Entry {
        std::string name;
        Tensor value;
    };
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Adam with bias correction. Moment buffers are keyed by parameter index and
// sized lazily on the first step.
class Adam {
public:
    struct Hyper {
        double lr = 3e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam() = default;
    explicit Adam(Hyper hyper) : hyper_(hyper) {}

    Hyper& hyper() { return hyper_; }
    std::int64_t step_count() const { return t_; }

    // grads[i] pairs with params.value(i); an empty gradient tensor means the
    // parameter did not participate in this step and is left unchanged.
    void step(ParamStore& params, const std::vector<Tensor>& grads) {
        if (grads.size() != params.size())
            throw ShapeError("adam: gradient list size " + std::to_string(grads.size()) +
                             " does not match parameter count " + std::to_string(params.size()));
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i] = Tensor::zeros(params.value(i).shape);
                v_[i] = Tensor::zeros(params.value(i).shape);
            }
        }
        t_ += 1;
        const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const Tensor& g = grads[i];
            if (g.data.empty()) continue;
            Tensor& p = params.value(i);
            if (!g.same_shape(p))
                throw ShapeError("adam: gradient shape " + g.shape_str() + " for " +
                                 params.name(i) + " does not match parameter " + p.shape_str());
            for (const double gv : g.data)
                if (!std::isfinite(gv))
                    throw NumericalError("non-finite gradient for " + params.name(i) +
                                         " at optimizer step " + std::to_string(t_));
            Tensor& m = m_[i];
            Tensor& v = v_[i];
            for (std::size_t j = 0; j < p.data.size(); ++j) {
                const double gv = g.data[j];
                m.data[j] = hyper_.beta1 * m.data[j] + (1.0 - hyper_.beta1) * gv;
                v.data[j] = hyper_.beta2 * v.data[j] + (1.0 - hyper_.beta2) * gv * gv;
                const double mhat = m.data[j] / bc1;
                const double vhat = v.data[j] / bc2;
                p.data[j] -= hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps);
            }
        }
    }

private:
    Hyper hyper_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

namespace checkpoint {

inline constexpr char kMagic[8] = {'G', 'E', 'T', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint8_t kFormatVersion = 1;

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    os.write(buf, 8);
}

inline std::uint64_t read_u64(std::istream& is) {
    char buf[8];
    is.read(buf, 8);
    std::uint64_t v;
    std::memcpy(&v, buf, 8);
    return v;
}

}  // namespace detail

// Layout: magic, one version byte, u64 tensor count, then per tensor
// (u64 name length, name bytes, u64 rank, u64 dims..., f64 data...).
// All integers and doubles are little-endian.
inline void save(const std::filesystem::path& path, const ParamStore& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
    os.write(kMagic, 8);
    os.put(static_cast<char>(kFormatVersion));
    detail::write_u64(os, params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.name(i);
        const Tensor& t = params.value(i);
        detail::write_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u64(os, static_cast<std::uint64_t>(t.rank()));
        for (std::int64_t d : t.shape) detail::write_u64(os, static_cast<std::uint64_t>(d));
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw IoError("short write while saving checkpoint: " + path.string());
}

inline ParamStore load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("not a checkpoint file: " + path.string());
    const int version = is.get();
    if (version != kFormatVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " +
                      path.string());
    const std::uint64_t count = detail::read_u64(is);
    ParamStore params;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t name_len = detail::read_u64(is);
        if (!is || name_len > (1u << 20))
            throw IoError("corrupt checkpoint (name length): " + path.string());
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        const std::uint64_t rank = detail::read_u64(is);
        if (!is || rank > 8) throw IoError("corrupt checkpoint (rank): " + path.string());
        std::vector<std::int64_t> shape(rank);
        for (auto& d : shape) d = static_cast<std::int64_t>(detail::read_u64(is));
        Tensor t = Tensor::zeros(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw IoError("truncated checkpoint: " + path.string());
        params.add(name, std::move(t));
    }
    return params;
}

}  // namespace checkpoint

}  // namespace get
