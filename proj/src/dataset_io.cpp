#include "kanbench/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace kanbench {

namespace {

using nlohmann::json;

// data.bin is little-endian on disk regardless of host order.
template <typename T>
void to_little_endian(std::vector<T>& v) {
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& x : v) {
            auto* b = reinterpret_cast<unsigned char*>(&x);
            std::reverse(b, b + sizeof(T));
        }
    } else {
        (void)v;
    }
}

json shape_to_json(const Shape& s) {
    json a = json::array();
    for (auto e : s) a.push_back(e);
    return a;
}

Shape shape_from_json(const json& a) {
    Shape s;
    for (const auto& e : a) s.push_back(e.get<std::int64_t>());
    return s;
}

} // namespace

std::size_t StoredArray::elem_size() const {
    if (dtype == "f64" || dtype == "i64") return 8;
    if (dtype == "f32") return 4;
    throw IoError("unknown dtype '" + dtype + "'");
}

void ArrayStore::put(const std::string& name, const Tensor& t) {
    put_f64(name, t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
}

StoredArray& ArrayStore::emplace(const std::string& name) {
    if (find(name)) throw IoError("ArrayStore: duplicate array name '" + name + "'");
    order_.push_back(name);
    arrays_.emplace_back();
    return arrays_.back();
}

void ArrayStore::put_f64(const std::string& name, Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("ArrayStore: " + name + ": " + std::to_string(values.size()) +
                         " values do not fill " + shape_str(shape));
    auto& a = emplace(name);
    a.dtype = "f64";
    a.shape = std::move(shape);
    a.f64 = std::move(values);
}

void ArrayStore::put_f32(const std::string& name, Shape shape, std::vector<float> values) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("ArrayStore: " + name + ": value count does not fill " + shape_str(shape));
    auto& a = emplace(name);
    a.dtype = "f32";
    a.shape = std::move(shape);
    a.f32 = std::move(values);
}

void ArrayStore::put_i64(const std::string& name, Shape shape, std::vector<std::int64_t> values) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("ArrayStore: " + name + ": value count does not fill " + shape_str(shape));
    auto& a = emplace(name);
    a.dtype = "i64";
    a.shape = std::move(shape);
    a.i64 = std::move(values);
}

const StoredArray* ArrayStore::find(const std::string& name) const {
    for (std::size_t i = 0; i < order_.size(); ++i)
        if (order_[i] == name) return &arrays_[i];
    return nullptr;
}

bool ArrayStore::has(const std::string& name) const { return find(name) != nullptr; }

const StoredArray& ArrayStore::at(const std::string& name) const {
    const auto* a = find(name);
    if (!a) throw IoError("ArrayStore: missing array '" + name + "'");
    return *a;
}

Tensor ArrayStore::tensor(const std::string& name) const {
    const auto& a = at(name);
    if (a.dtype != "f64") throw IoError("ArrayStore: array '" + name + "' is not f64");
    return Tensor(a.shape, a.f64);
}

std::vector<std::int64_t> ArrayStore::i64(const std::string& name) const {
    const auto& a = at(name);
    if (a.dtype != "i64") throw IoError("ArrayStore: array '" + name + "' is not i64");
    return a.i64;
}

void ArrayStore::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);

    json arrays = json::array();
    std::uint64_t offset = 0;
    std::ofstream blob(dir / "data.bin", std::ios::binary | std::ios::trunc);
    if (!blob) throw IoError("cannot write " + (dir / "data.bin").string());

    for (std::size_t i = 0; i < order_.size(); ++i) {
        const auto& a = arrays_[i];
        const std::uint64_t nbytes = static_cast<std::uint64_t>(a.numel()) * a.elem_size();
        arrays.push_back({{"name", order_[i]},
                          {"dtype", a.dtype},
                          {"shape", shape_to_json(a.shape)},
                          {"offset", offset},
                          {"nbytes", nbytes}});
        if (a.dtype == "f64") {
            auto v = a.f64;
            to_little_endian(v);
            blob.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(nbytes));
        } else if (a.dtype == "f32") {
            auto v = a.f32;
            to_little_endian(v);
            blob.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(nbytes));
        } else {
            auto v = a.i64;
            to_little_endian(v);
            blob.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(nbytes));
        }
        offset += nbytes;
    }
    blob.close();
    if (!blob) throw IoError("failed writing " + (dir / "data.bin").string());

    json manifest;
    manifest["format"] = kFormatVersion;
    manifest["arrays"] = std::move(arrays);
    manifest["metadata"] = metadata.is_null() ? json::object() : metadata;

    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    if (!mf) throw IoError("cannot write " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << '\n';
}

ArrayStore ArrayStore::load(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw IoError("missing manifest: " + (dir / "manifest.json").string());
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest " + (dir / "manifest.json").string() + ": " + e.what());
    }

    if (!manifest.contains("format") || manifest["format"] != kFormatVersion)
        throw IoError("unsupported dataset format in " + dir.string() + " (expected " +
                      std::string(kFormatVersion) + ")");

    std::ifstream blob(dir / "data.bin", std::ios::binary | std::ios::ate);
    if (!blob) throw IoError("missing blob: " + (dir / "data.bin").string());
    const std::uint64_t blob_size = static_cast<std::uint64_t>(blob.tellg());

    struct Range {
        std::uint64_t lo, hi;
    };
    std::vector<Range> ranges;

    ArrayStore store;
    store.metadata = manifest.value("metadata", json::object());
    for (const auto& entry : manifest.at("arrays")) {
        const std::string name = entry.at("name").get<std::string>();
        StoredArray a;
        a.dtype = entry.at("dtype").get<std::string>();
        a.shape = shape_from_json(entry.at("shape"));
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        const std::uint64_t nbytes = entry.at("nbytes").get<std::uint64_t>();

        const std::uint64_t expect = static_cast<std::uint64_t>(a.numel()) * a.elem_size();
        if (nbytes != expect)
            throw IoError("array '" + name + "': nbytes " + std::to_string(nbytes) +
                          " does not match shape " + shape_str(a.shape));
        if (offset + nbytes > blob_size)
            throw IoError("array '" + name + "': extends past end of data.bin (" +
                          std::to_string(offset + nbytes) + " > " + std::to_string(blob_size) + ")");
        ranges.push_back({offset, offset + nbytes});

        blob.seekg(static_cast<std::streamoff>(offset));
        if (a.dtype == "f64") {
            a.f64.resize(static_cast<std::size_t>(a.numel()));
            blob.read(reinterpret_cast<char*>(a.f64.data()), static_cast<std::streamsize>(nbytes));
            to_little_endian(a.f64);
        } else if (a.dtype == "f32") {
            a.f32.resize(static_cast<std::size_t>(a.numel()));
            blob.read(reinterpret_cast<char*>(a.f32.data()), static_cast<std::streamsize>(nbytes));
            to_little_endian(a.f32);
        } else if (a.dtype == "i64") {
            a.i64.resize(static_cast<std::size_t>(a.numel()));
            blob.read(reinterpret_cast<char*>(a.i64.data()), static_cast<std::streamsize>(nbytes));
            to_little_endian(a.i64);
        } else {
            throw IoError("array '" + name + "': unknown dtype '" + a.dtype + "'");
        }
        if (!blob) throw IoError("array '" + name + "': truncated read from data.bin");

        store.order_.push_back(name);
        store.arrays_.push_back(std::move(a));
    }

    std::sort(ranges.begin(), ranges.end(), [](const Range& x, const Range& y) { return x.lo < y.lo; });
    for (std::size_t i = 1; i < ranges.size(); ++i)
        if (ranges[i].lo < ranges[i - 1].hi)
            throw IoError("manifest in " + dir.string() + " has overlapping array offsets");

    return store;
}

} // namespace kanbench
