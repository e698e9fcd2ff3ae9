#include "pargraph/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian; big-endian hosts are unsupported");

namespace pargraph {

using nlohmann::json;

namespace {

// FNV-1a over the raw blob; catches bit flips that still decode as finite
// doubles and would otherwise load silently.
std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}
constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ull;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void save_weights(const std::string& path, const std::vector<NamedTensor>& tensors) {
    json manifest;
    manifest["version"] = kWeightsVersion;
    manifest["tensors"] = json::array();
    std::uint64_t hash = kFnvBasis;
    for (const NamedTensor& t : tensors) {
        if (!all_finite(*t.tensor))
            throw NumericError("save_weights: non-finite values in " + t.name);
        manifest["tensors"].push_back({{"name", t.name}, {"rows", t.tensor->rows}, {"cols", t.tensor->cols}});
        hash = fnv1a(hash, t.tensor->data.data(), t.tensor->data.size() * sizeof(double));
    }
    manifest["blob_fnv1a"] = hex64(hash);
    const std::string mstr = manifest.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_weights: cannot open " + path);
    const std::uint64_t mlen = mstr.size();
    out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    out.write(mstr.data(), std::streamsize(mstr.size()));
    for (const NamedTensor& t : tensors)
        out.write(reinterpret_cast<const char*>(t.tensor->data.data()),
                  std::streamsize(t.tensor->data.size() * sizeof(double)));
    if (!out) throw DataError("save_weights: write failed for " + path);
}

std::vector<LoadedTensor> load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_weights: cannot open " + path);
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    if (!in || mlen == 0 || mlen > (1u << 26))
        throw DataError("load_weights: corrupt manifest header in " + path);
    std::string mstr(mlen, '\0');
    in.read(mstr.data(), std::streamsize(mlen));
    if (!in) throw DataError("load_weights: truncated manifest in " + path);

    json manifest;
    try {
        manifest = json::parse(mstr);
    } catch (const json::exception& e) {
        throw DataError("load_weights: bad manifest JSON in " + path + ": " + e.what());
    }
    if (manifest.value("version", "") != kWeightsVersion)
        throw DataError("load_weights: unsupported version in " + path);

    std::vector<LoadedTensor> out;
    std::uint64_t hash = kFnvBasis;
    for (const json& entry : manifest.at("tensors")) {
        LoadedTensor t;
        t.name = entry.at("name").get<std::string>();
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        if (rows < 0 || cols < 0) throw DataError("load_weights: negative shape for " + t.name);
        t.tensor = Tensor2(rows, cols);
        in.read(reinterpret_cast<char*>(t.tensor.data.data()),
                std::streamsize(t.tensor.data.size() * sizeof(double)));
        if (!in) throw DataError("load_weights: truncated blob at tensor " + t.name);
        if (!all_finite(t.tensor))
            throw DataError("load_weights: non-finite values in tensor " + t.name);
        hash = fnv1a(hash, t.tensor.data.data(), t.tensor.data.size() * sizeof(double));
        out.push_back(std::move(t));
    }
    if (hex64(hash) != manifest.value("blob_fnv1a", ""))
        throw DataError("load_weights: blob checksum mismatch in " + path);
    // Trailing bytes mean the blob does not match the manifest.
    char extra;
    if (in.read(&extra, 1)) throw DataError("load_weights: trailing bytes after blob in " + path);
    return out;
}

void load_weights_into(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::vector<LoadedTensor> loaded = load_weights(path);
    std::map<std::string, Tensor2*> by_name;
    for (LoadedTensor& t : loaded) by_name[t.name] = &t.tensor;
    if (by_name.size() != loaded.size())
        throw DataError("load_weights_into: duplicate tensor names in " + path);
    if (loaded.size() != tensors.size())
        throw DataError("load_weights_into: file has " + std::to_string(loaded.size()) +
                        " tensors, model expects " + std::to_string(tensors.size()));
    for (const NamedTensor& want : tensors) {
        auto it = by_name.find(want.name);
        if (it == by_name.end())
            throw DataError("load_weights_into: missing tensor " + want.name);
        if (!it->second->same_shape(*want.tensor))
            throw DataError("load_weights_into: shape mismatch for " + want.name);
        *want.tensor = std::move(*it->second);
    }
}

}  // namespace pargraph
