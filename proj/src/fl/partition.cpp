#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gleak/fl.hpp"
#include "gleak/rng.hpp"

namespace gleak::fl {

std::string partition_mode_name(PartitionMode m) {
  switch (m) {
    case PartitionMode::Iid: return "iid";
    case PartitionMode::LabelSkew: return "label-skew";
    case PartitionMode::QuantitySkew: return "quantity-skew";
    case PartitionMode::FeatureSkew: return "feature-skew";
    case PartitionMode::Dirichlet: return "dirichlet";
  }
  return "?";
}

PartitionMode parse_partition_mode(const std::string& s) {
  for (auto m : {PartitionMode::Iid, PartitionMode::LabelSkew, PartitionMode::QuantitySkew,
                 PartitionMode::FeatureSkew, PartitionMode::Dirichlet}) {
    if (partition_mode_name(m) == s) return m;
  }
  throw std::invalid_argument("unknown partition mode '" + s + "'");
}

namespace {

// Splits `items` into `parts` contiguous chunks whose sizes differ by at most
// one, larger chunks first.
std::vector<std::vector<std::size_t>> split_even(const std::vector<std::size_t>& items,
                                                 std::size_t parts) {
  std::vector<std::vector<std::size_t>> out(parts);
  std::size_t at = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = items.size() / parts + (p < items.size() % parts ? 1 : 0);
    out[p].assign(items.begin() + static_cast<std::ptrdiff_t>(at),
                  items.begin() + static_cast<std::ptrdiff_t>(at + len));
    at += len;
  }
  return out;
}

std::vector<std::size_t> shuffled_range(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx.begin(), idx.end());
  return idx;
}

std::vector<std::vector<std::size_t>> by_class(const data::Dataset& d, Rng& rng) {
  std::vector<std::vector<std::size_t>> cls(d.classes);
  for (std::size_t i = 0; i < d.size(); ++i) cls.at(static_cast<std::size_t>(d.labels[i])).push_back(i);
  for (auto& c : cls) rng.shuffle(c.begin(), c.end());
  return cls;
}

ClientIndices label_skew(const data::Dataset& d, const PartitionSpec& spec, Rng& rng) {
  const std::size_t N = d.classes, c = spec.classes_per_client, K = spec.clients;
  if (c == 0 || c > N) throw std::invalid_argument("classes_per_client must be in [1, classes]");
  if (c * K < N) throw std::invalid_argument("clients * classes_per_client must cover every class");
  std::vector<std::vector<std::size_t>> holders(N);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < c; ++j) holders[(k * c + j) % N].push_back(k);
  ClientIndices out(K);
  const auto cls = by_class(d, rng);
  for (std::size_t y = 0; y < N; ++y) {
    const auto chunks = split_even(cls[y], holders[y].size());
    for (std::size_t h = 0; h < holders[y].size(); ++h) {
      auto& dst = out[holders[y][h]];
      dst.insert(dst.end(), chunks[h].begin(), chunks[h].end());
    }
  }
  return out;
}

ClientIndices quantity_skew(const data::Dataset& d, const PartitionSpec& spec, Rng& rng) {
  const std::size_t K = spec.clients, n = d.size();
  std::vector<double> w = spec.sizes;
  if (w.empty()) {
    for (std::size_t k = 0; k < K; ++k) w.push_back(std::pow(0.7, static_cast<double>(k)));
  }
  if (w.size() != K) throw std::invalid_argument("quantity-skew sizes must list one weight per client");
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double v : w)
    if (!(v > 0)) throw std::invalid_argument("quantity-skew sizes must be positive");

  std::vector<std::size_t> count(K);
  std::vector<std::pair<double, std::size_t>> frac;
  std::size_t used = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const double share = w[k] / total * static_cast<double>(n);
    count[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(share)));
    frac.emplace_back(-(share - std::floor(share)), k);
    used += count[k];
  }
  std::sort(frac.begin(), frac.end());
  for (std::size_t r = 0; used < n; ++r, ++used) ++count[frac[r % K].second];
  while (used > n) {
    const auto big = static_cast<std::size_t>(std::max_element(count.begin(), count.end()) - count.begin());
    --count[big];
    --used;
  }
  const auto order = shuffled_range(n, rng);
  ClientIndices out(K);
  std::size_t at = 0;
  for (std::size_t k = 0; k < K; ++k) {
    out[k].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                  order.begin() + static_cast<std::ptrdiff_t>(at + count[k]));
    at += count[k];
  }
  return out;
}

ClientIndices feature_skew(const data::Dataset& d, const PartitionSpec& spec, Rng& rng) {
  const std::size_t G = spec.tv_groups, K = spec.clients;
  if (G == 0 || G > d.size()) throw std::invalid_argument("tv_groups must be in [1, samples]");
  std::vector<double> tv(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) tv[i] = data::image_tv(d.sample(i));
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return tv[a] < tv[b]; });
  const auto bands = split_even(order, G);

  ClientIndices out(K);
  for (std::size_t b = 0; b < G; ++b) {
    std::vector<std::size_t> members;
    if (K >= G) {
      for (std::size_t k = b; k < K; k += G) members.push_back(k);
    } else {
      members.push_back(b % K);
    }
    auto band = bands[b];
    rng.shuffle(band.begin(), band.end());
    const auto chunks = split_even(band, members.size());
    for (std::size_t m = 0; m < members.size(); ++m) {
      out[members[m]].insert(out[members[m]].end(), chunks[m].begin(), chunks[m].end());
    }
  }
  return out;
}

ClientIndices dirichlet(const data::Dataset& d, const PartitionSpec& spec, Rng& rng) {
  if (!(spec.alpha > 0)) throw std::invalid_argument("dirichlet alpha must be > 0");
  const std::size_t K = spec.clients;
  for (int attempt = 0; attempt < 100; ++attempt) {
    ClientIndices out(K);
    for (const auto& members : by_class(d, rng)) {
      std::vector<double> p(K);
      double total = 0.0;
      for (double& v : p) total += (v = rng.gamma(spec.alpha));
      double cum = 0.0;
      std::size_t at = 0;
      for (std::size_t k = 0; k < K; ++k) {
        cum += p[k] / total;
        const std::size_t end = k + 1 == K ? members.size()
                                           : std::min(members.size(), static_cast<std::size_t>(std::llround(
                                                                          cum * static_cast<double>(members.size()))));
        for (; at < end; ++at) out[k].push_back(members[at]);
      }
    }
    if (std::none_of(out.begin(), out.end(), [](const auto& c) { return c.empty(); })) return out;
  }
  throw std::invalid_argument("dirichlet partition left a client empty after 100 draws; raise alpha");
}

}  // namespace

ClientIndices partition(const data::Dataset& dataset, const PartitionSpec& spec) {
  if (spec.clients == 0) throw std::invalid_argument("partition needs at least one client");
  if (dataset.size() < spec.clients) throw std::invalid_argument("fewer samples than clients");
  Rng rng(derive_seed(spec.seed, "partition"));
  ClientIndices out;
  switch (spec.mode) {
    case PartitionMode::Iid:
      out = split_even(shuffled_range(dataset.size(), rng), spec.clients);
      break;
    case PartitionMode::LabelSkew:
      out = label_skew(dataset, spec, rng);
      break;
    case PartitionMode::QuantitySkew:
      out = quantity_skew(dataset, spec, rng);
      break;
    case PartitionMode::FeatureSkew:
      out = feature_skew(dataset, spec, rng);
      break;
    case PartitionMode::Dirichlet:
      out = dirichlet(dataset, spec, rng);
      break;
  }
  for (auto& c : out) {
    if (c.empty()) throw std::invalid_argument("partition left a client without samples");
    std::sort(c.begin(), c.end());
  }
  return out;
}

}  // namespace gleak::fl
