#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgnet/common.hpp"
#include "mgnet/tensor.hpp"

namespace mgnet {

inline constexpr char kWeightMagic[8] = {'M', 'G', 'N', 'E', 'T', 'W', '0', '1'};

// Immutable-after-load named tensor map.
class WeightStore {
  public:
    void put(const std::string& name, Tensor t) {
        if (tensors_.count(name))
            throw ValidationError("WeightStore: duplicate tensor name " + name);
        tensors_.emplace(name, std::move(t));
    }

    const Tensor& get(const std::string& name) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end())
            throw ValidationError("WeightStore: missing tensor " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return tensors_.count(name) != 0; }

    // 1-D parameter stored as (1, c, 1, 1).
    std::vector<float> get_vector(const std::string& name) const {
        const Tensor& t = get(name);
        if (t.n != 1 || t.h != 1 || t.w != 1)
            throw DimensionError("WeightStore: " + name + " is not a vector, shape " +
                                 t.shape_str());
        return t.data;
    }

    const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  private:
    std::map<std::string, Tensor> tensors_;
};

// File layout: 8-byte magic "MGNETW01", 8-byte little-endian header length,
// UTF-8 JSON header listing entries, then the packed little-endian f32 blob.
inline void save_weights(const std::string& path, const WeightStore& store) {
    nlohmann::json entries = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : store.tensors()) {
        uint64_t length = static_cast<uint64_t>(t.size()) * 4;
        entries.push_back({{"name", name},
                           {"dtype", "f32"},
                           {"shape", {t.n, t.c, t.h, t.w}},
                           {"offset", offset},
                           {"length", length}});
        offset += length;
    }
    std::string header = nlohmann::json{{"entries", entries}}.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_weights: cannot open " + path);
    f.write(kWeightMagic, 8);
    uint64_t hlen = header.size();
    char lenbuf[8];
    for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((hlen >> (8 * i)) & 0xff);
    f.write(lenbuf, 8);
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, t] : store.tensors()) {
        (void)name;
        f.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * 4));
    }
    if (!f) throw IoError("save_weights: write failed for " + path);
}

inline WeightStore load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_weights: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kWeightMagic, 8) != 0)
        throw FormatError("load_weights: bad magic in " + path);
    char lenbuf[8];
    f.read(lenbuf, 8);
    if (!f) throw FormatError("load_weights: truncated header length in " + path);
    uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i)
        hlen |= static_cast<uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
    if (hlen > (1ull << 30)) throw FormatError("load_weights: implausible header length");
    std::string header(hlen, '\0');
    f.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw FormatError("load_weights: truncated header in " + path);

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_weights: header parse error: ") + e.what());
    }
    if (!doc.contains("entries") || !doc["entries"].is_array())
        throw FormatError("load_weights: header has no entries array");

    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    uint64_t blob_len = blob.size();

    struct Entry {
        std::string name;
        int shape[4];
        uint64_t offset, length;
    };
    std::vector<Entry> parsed;
    uint64_t total = 0;
    for (const auto& e : doc["entries"]) {
        Entry en;
        en.name = e.at("name").get<std::string>();
        if (e.at("dtype").get<std::string>() != "f32")
            throw FormatError("load_weights: unsupported dtype for " + en.name);
        auto sh = e.at("shape");
        if (!sh.is_array() || sh.size() != 4)
            throw FormatError("load_weights: bad shape for " + en.name);
        uint64_t count = 1;
        for (int i = 0; i < 4; ++i) {
            en.shape[i] = sh[i].get<int>();
            if (en.shape[i] < 0) throw FormatError("load_weights: negative extent for " + en.name);
            count *= static_cast<uint64_t>(en.shape[i]);
        }
        en.offset = e.at("offset").get<uint64_t>();
        en.length = e.at("length").get<uint64_t>();
        if (en.length != count * 4)
            throw FormatError("load_weights: length/shape mismatch for " + en.name);
        if (en.offset + en.length > blob_len || en.offset + en.length < en.offset)
            throw FormatError("load_weights: entry out of bounds: " + en.name);
        total += en.length;
        parsed.push_back(std::move(en));
    }
    if (total != blob_len)
        throw FormatError("load_weights: blob length does not equal sum of entry lengths");
    // overlap check
    std::vector<std::pair<uint64_t, uint64_t>> spans;
    spans.reserve(parsed.size());
    for (const auto& e : parsed) spans.emplace_back(e.offset, e.offset + e.length);
    std::sort(spans.begin(), spans.end());
    for (size_t i = 1; i < spans.size(); ++i)
        if (spans[i].first < spans[i - 1].second)
            throw FormatError("load_weights: overlapping entries");

    WeightStore store;
    for (const auto& e : parsed) {
        Tensor t(e.shape[0], e.shape[1], e.shape[2], e.shape[3]);
        std::memcpy(t.data.data(), blob.data() + e.offset, e.length);
        store.put(e.name, std::move(t));
    }
    return store;
}

}  // namespace mgnet
