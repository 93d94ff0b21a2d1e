#include "sip/dataset.hpp"

#include <cmath>

#include "sip/csv.hpp"
#include "sip/errors.hpp"

namespace sip {

namespace {

struct Split {
    Tensor x;  // [n, 1]
    Tensor y;  // [n]
};

Split draw_bimodal(Rng& rng, std::size_t n) {
    Split s;
    s.x = rng.uniform(-4.0, 4.0, {n, 1});
    Tensor branch = rng.bernoulli_mask(0.5, {n});
    Tensor eps = rng.normal(0.0, 1.0, {n});
    s.y = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
        const double x = s.x[i];
        const double mean =
            branch[i] > 0.5 ? 10.0 * std::cos(x - 0.5) : 10.0 * std::sin(x - 0.5);
        s.y[i] = mean + eps[i];
    }
    return s;
}

Split draw_heteroscedastic(Rng& rng, std::size_t n) {
    Split s;
    s.x = rng.uniform(-4.0, 4.0, {n, 1});
    Tensor eps = rng.normal(0.0, 2.0, {n});
    s.y = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
        const double sx = std::sin(s.x[i]);
        s.y[i] = 7.0 * sx + eps[i] * sx + 10.0;
    }
    return s;
}

void require_n(std::size_t n, const char* who) {
    if (n < 2) {
        throw ContractError(std::string(who) + ": need n >= 2, got " +
                            std::to_string(n));
    }
}

double mean_of(const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) s += t[i];
    return s / static_cast<double>(t.numel());
}

double std_of(const Tensor& t, double mean) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const double d = t[i] - mean;
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(t.numel()));
}

}  // namespace

Dataset generate_bimodal(Rng& rng, std::size_t n) {
    require_n(n, "generate_bimodal");
    Dataset ds;
    ds.name = "bimodal";
    Rng train = rng.stream(streams::kDataTrain);
    Rng test = rng.stream(streams::kDataTest);
    Split tr = draw_bimodal(train, n);
    Split te = draw_bimodal(test, n);
    ds.x_train = std::move(tr.x);
    ds.y_train = std::move(tr.y);
    ds.x_test = std::move(te.x);
    ds.y_test = std::move(te.y);
    return ds;
}

Dataset generate_heteroscedastic(Rng& rng, std::size_t n) {
    require_n(n, "generate_heteroscedastic");
    Dataset ds;
    ds.name = "heteroscedastic";
    Rng train = rng.stream(streams::kDataTrain);
    Rng test = rng.stream(streams::kDataTest);
    Split tr = draw_heteroscedastic(train, n);
    Split te = draw_heteroscedastic(test, n);
    ds.x_train = std::move(tr.x);
    ds.y_train = std::move(tr.y);
    ds.x_test = std::move(te.x);
    ds.y_test = std::move(te.y);
    return ds;
}

Dataset standardize(const Dataset& ds) {
    if (ds.standardized) {
        throw ContractError("standardize: dataset is already standardized");
    }
    Standardization st;
    st.x_mean = mean_of(ds.x_train);
    st.x_std = std_of(ds.x_train, st.x_mean);
    st.y_mean = mean_of(ds.y_train);
    st.y_std = std_of(ds.y_train, st.y_mean);
    if (st.x_std <= 0.0 || st.y_std <= 0.0) {
        throw DomainError("standardize: degenerate data with zero variance (x_std=" +
                          std::to_string(st.x_std) + ", y_std=" +
                          std::to_string(st.y_std) + ")");
    }
    Dataset out = ds;
    out.standardized = true;
    out.stats = st;
    auto tx = [&](Tensor& t) {
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = (t[i] - st.x_mean) / st.x_std;
    };
    auto ty = [&](Tensor& t) {
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = (t[i] - st.y_mean) / st.y_std;
    };
    tx(out.x_train);
    tx(out.x_test);
    ty(out.y_train);
    ty(out.y_test);
    return out;
}

Dataset destandardize(const Dataset& ds) {
    if (!ds.standardized) {
        throw ContractError("destandardize: dataset is not standardized");
    }
    const Standardization& st = ds.stats;
    Dataset out = ds;
    out.standardized = false;
    auto tx = [&](Tensor& t) {
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = t[i] * st.x_std + st.x_mean;
    };
    auto ty = [&](Tensor& t) {
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = t[i] * st.y_std + st.y_mean;
    };
    tx(out.x_train);
    tx(out.x_test);
    ty(out.y_train);
    ty(out.y_test);
    return out;
}

void export_csv(const Dataset& ds, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(ds.y_train.numel());
    for (std::size_t i = 0; i < ds.y_train.numel(); ++i) {
        rows.push_back({format_sig17(ds.x_train[i]), format_sig17(ds.y_train[i])});
    }
    write_csv(path, {"x", "y"}, rows);
}

}  // namespace sip
