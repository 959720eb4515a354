#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "setgen/core/common.hpp"
#include "setgen/core/param.hpp"
#include "setgen/util/hash.hpp"

namespace setgen::ser {

using nlohmann::json;

// Checkpoint container: magic, version, JSON header (config echo, tensor
// directory, rng state, step count), then float32 row-major tensor payload.
// Keys in the JSON header are sorted by nlohmann, so identical contents give
// identical bytes.
constexpr char kMagic[4] = {'S', 'G', 'C', 'K'};
constexpr uint32_t kVersion = 1;

struct TensorEntry {
    std::string name;
    Mat<float> data;
};

struct Checkpoint {
    std::string kind;  // "vae" or "ldm"
    json config;       // config echo
    json extra;        // module manifest (condition space etc), may be null
    std::string rng_state;
    long step = 0;
    std::vector<TensorEntry> tensors;

    const TensorEntry* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
};

namespace detail {

inline void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const char* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

inline uint64_t get_u64(const char* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

// Row-major float32 bytes of one tensor.
inline void append_payload(std::string& buf, const Mat<float>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            float f = m(i, j);
            char b[4];
            std::memcpy(b, &f, 4);
            buf.append(b, 4);
        }
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
    json dir = json::array();
    std::string payload;
    for (const auto& t : ck.tensors) {
        dir.push_back({{"name", t.name},
                       {"rows", t.data.rows()},
                       {"cols", t.data.cols()},
                       {"offset", payload.size()}});
        detail::append_payload(payload, t.data);
    }
    json header = {{"version", kVersion}, {"kind", ck.kind},      {"config", ck.config},
                   {"extra", ck.extra},   {"rng_state", ck.rng_state}, {"step", ck.step},
                   {"tensors", dir}};
    const std::string hs = header.dump();

    std::string out;
    out.append(kMagic, 4);
    detail::put_u32(out, kVersion);
    detail::put_u64(out, hs.size());
    out += hs;
    out += payload;
    return out;
}

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
    const std::string bytes = encode_checkpoint(ck);
    // Atomic publish: write to a sibling temp file, then rename.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        require<io_error>(f.good(), "cannot open " + tmp + " for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require<io_error>(f.good(), "write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require<io_error>(f.good(), "cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    require<io_error>(bytes.size() >= 16, "checkpoint too short: " + path);
    require<io_error>(std::memcmp(bytes.data(), kMagic, 4) == 0,
                      "bad checkpoint magic in " + path);
    const uint32_t version = detail::get_u32(bytes.data() + 4);
    require<io_error>(version == kVersion,
                      "unsupported checkpoint version " + std::to_string(version) + " in " + path);
    const uint64_t hlen = detail::get_u64(bytes.data() + 8);
    require<io_error>(16 + hlen <= bytes.size(), "truncated checkpoint header in " + path);
    json header;
    try {
        header = json::parse(bytes.substr(16, hlen));
    } catch (const std::exception& e) {
        throw io_error("corrupt checkpoint header in " + path + ": " + e.what());
    }

    Checkpoint ck;
    ck.kind = header.at("kind").get<std::string>();
    ck.config = header.at("config");
    ck.extra = header.value("extra", json());
    ck.rng_state = header.at("rng_state").get<std::string>();
    ck.step = header.at("step").get<long>();
    const std::string payload = bytes.substr(16 + hlen);
    for (const auto& e : header.at("tensors")) {
        TensorEntry t;
        t.name = e.at("name").get<std::string>();
        const Eigen::Index rows = e.at("rows").get<Eigen::Index>();
        const Eigen::Index cols = e.at("cols").get<Eigen::Index>();
        const uint64_t off = e.at("offset").get<uint64_t>();
        const uint64_t need = off + 4ull * rows * cols;
        require<io_error>(need <= payload.size(), "truncated tensor payload for " + t.name);
        t.data.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) {
                float v;
                std::memcpy(&v, payload.data() + off + 4 * (i * cols + j), 4);
                t.data(i, j) = v;
            }
        ck.tensors.push_back(std::move(t));
    }
    return ck;
}

// Pack a parameter struct (anything with for_each) into checkpoint tensors.
template <typename S, typename P>
void pack_params(P& params, Checkpoint& ck) {
    params.for_each([&](const std::string& name, Tensor<S>& t) {
        ck.tensors.push_back({name, t.v.template cast<float>()});
    });
}

// Restore tensors by name; every parameter must be present with its shape,
// and no unknown tensor may remain.
template <typename S, typename P>
void unpack_params(const Checkpoint& ck, P& params) {
    size_t used = 0;
    params.for_each([&](const std::string& name, Tensor<S>& t) {
        const TensorEntry* e = ck.find(name);
        require<io_error>(e != nullptr, "checkpoint missing tensor " + name);
        require<io_error>(e->data.rows() == t.v.rows() && e->data.cols() == t.v.cols(),
                          "checkpoint shape mismatch for " + name);
        t.v = e->data.template cast<S>();
        ++used;
    });
    require<io_error>(used == ck.tensors.size(),
                      "checkpoint has " + std::to_string(ck.tensors.size() - used) +
                          " unknown tensors");
}

// Order-sensitive hash of the float32 encoding of all parameters; used for
// the stage-2 freeze assertion.
template <typename S, typename P>
uint64_t params_hash(P& params) {
    uint64_t h = 1469598103934665603ull;
    params.for_each([&](const std::string& name, Tensor<S>& t) {
        h = hash_combine(h, fnv1a64(name));
        std::string buf;
        detail::append_payload(buf, t.v.template cast<float>().eval());
        h = hash_combine(h, fnv1a64(buf.data(), buf.size()));
    });
    return h;
}

}  // namespace setgen::ser
