#include "syscade/deep/tensor.hpp"

#include <algorithm>

#include "syscade/errors.hpp"

namespace syscade::deep {

Tensor::Tensor(std::vector<long> s) : shape(std::move(s)) {
    long n = 1;
    for (long d : shape) n *= d;
    data.assign(static_cast<size_t>(n), 0.0);
}

Tensor& Registry::add(const std::string& name, std::vector<long> shape) {
    if (contains(name)) throw StateError("duplicate parameter name: " + name);
    items_.emplace_back(name, Tensor(std::move(shape)));
    return items_.back().second;
}

Tensor& Registry::get(const std::string& name) {
    for (auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw StateError("unknown parameter name: " + name);
}

const Tensor& Registry::get(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw StateError("unknown parameter name: " + name);
}

bool Registry::contains(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        (void)t;
        if (n == name) return true;
    }
    return false;
}

long Registry::total_size() const {
    long n = 0;
    for (const auto& [name, t] : items_) {
        (void)name;
        n += t.numel();
    }
    return n;
}

std::vector<double> Registry::flatten() const {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(total_size()));
    for (const auto& [name, t] : items_) {
        (void)name;
        flat.insert(flat.end(), t.data.begin(), t.data.end());
    }
    return flat;
}

void Registry::load_flat(const std::vector<double>& flat) {
    if (static_cast<long>(flat.size()) != total_size()) {
        throw ShapeError("flat parameter vector length mismatch");
    }
    size_t off = 0;
    for (auto& [name, t] : items_) {
        (void)name;
        std::copy(flat.begin() + off, flat.begin() + off + t.data.size(), t.data.begin());
        off += t.data.size();
    }
}

Registry Registry::zeros_like() const {
    Registry z;
    for (const auto& [name, t] : items_) z.add(name, t.shape);
    return z;
}

} // namespace syscade::deep
