#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kanbench/tensor.hpp"

namespace kanbench {

/// One named array inside a store. Exactly one payload vector is populated,
/// matching `dtype` ("f64" | "f32" | "i64").
struct StoredArray {
    std::string dtype;
    Shape shape;
    std::vector<double> f64;
    std::vector<float> f32;
    std::vector<std::int64_t> i64;

    std::int64_t numel() const { return shape_numel(shape); }
    std::size_t elem_size() const;
};

/// Directory-backed container: `manifest.json` (format version, array table
/// with byte offsets, metadata map) plus a single little-endian `data.bin`.
/// Datasets, models and rollout archives all persist through this one format.
class ArrayStore {
public:
    static constexpr const char* kFormatVersion = "kanbench-ds/1";

    void put(const std::string& name, const Tensor& t);
    void put_f64(const std::string& name, Shape shape, std::vector<double> values);
    void put_f32(const std::string& name, Shape shape, std::vector<float> values);
    void put_i64(const std::string& name, Shape shape, std::vector<std::int64_t> values);

    bool has(const std::string& name) const;
    const StoredArray& at(const std::string& name) const;

    /// f64 array as a Tensor.
    Tensor tensor(const std::string& name) const;
    std::vector<std::int64_t> i64(const std::string& name) const;

    /// Names in insertion order (manifest order is reproducible).
    const std::vector<std::string>& names() const { return order_; }

    nlohmann::json metadata;

    void save(const std::filesystem::path& dir) const;
    static ArrayStore load(const std::filesystem::path& dir);

private:
    std::vector<std::string> order_;
    std::vector<StoredArray> arrays_;
    const StoredArray* find(const std::string& name) const;
    StoredArray& emplace(const std::string& name);
};

} // namespace kanbench
