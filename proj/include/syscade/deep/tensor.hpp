#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace syscade::deep {

// Dense row-major tensor of doubles. Shape is carried for checking and
// serialization; layers index the flat data directly for speed.
struct Tensor {
    std::vector<long> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<long> s);

    long numel() const { return static_cast<long>(data.size()); }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    double& at(long i) { return data[i]; }
    double at(long i) const { return data[i]; }
    double& at(long i, long j) { return data[i * shape[1] + j]; }
    double at(long i, long j) const { return data[i * shape[1] + j]; }
    double& at(long i, long j, long k) { return data[(i * shape[1] + j) * shape[2] + k]; }
    double at(long i, long j, long k) const { return data[(i * shape[1] + j) * shape[2] + k]; }
};

// Named parameter collection with a stable order, so "all parameters" can be
// viewed, perturbed, and updated as one flat vector — the gradient oracle
// and the optimizer both work off this view.
class Registry {
public:
    Tensor& add(const std::string& name, std::vector<long> shape);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    size_t count() const { return items_.size(); }
    const std::string& name(size_t i) const { return items_[i].first; }
    Tensor& tensor(size_t i) { return items_[i].second; }
    const Tensor& tensor(size_t i) const { return items_[i].second; }

    long total_size() const;
    std::vector<double> flatten() const;
    void load_flat(const std::vector<double>& flat);

    // Same names and shapes, all zeros — the gradient accumulator layout.
    Registry zeros_like() const;

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

} // namespace syscade::deep
