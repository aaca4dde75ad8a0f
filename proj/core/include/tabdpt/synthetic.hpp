#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabdpt/table_store.hpp"

namespace tabdpt::synthetic {

/// Two isotropic Gaussian classes whose means sit `separation` apart along a random direction.
/// The last column, "label", is a categorical target ("c0" / "c1").
RawTable two_gaussian(std::size_t n, std::size_t f, std::uint64_t seed, double separation = 4.0);

/// y = w . x + noise, with unit-norm w scaled so var(w . x) = 1. Target column "y" is last.
RawTable linear_regression(std::size_t n, std::size_t f, std::uint64_t seed, double noise = 0.1);

/// f columns driven by `factors` shared latent Gaussians plus independent noise.
RawTable latent_factor(std::size_t n, std::size_t f, std::size_t factors, std::uint64_t seed, double noise = 0.2);

/// Gaussian mixture with a categorical "cluster" column as target.
RawTable clusters(std::size_t n, std::size_t f, std::size_t k, std::uint64_t seed, double spread = 1.5);

/// Inputs x_0..x_{m-1} and derived columns built from products, sines and thresholds of them.
RawTable nonlinear(std::size_t n, std::size_t f, std::uint64_t seed);

/// Independent standard normal columns, no target.
RawTable random_table(std::size_t n, std::size_t f, std::uint64_t seed);

/// Two informative inputs x0, x1 among f; target "y" is 1[x0 x1 > 0] (form 0, categorical),
/// |x0| + x1 / 2 (form 1) or tanh(2 x0) - x1^2 (form 2), the regression forms with small noise.
RawTable interaction(std::size_t n, std::size_t f, std::uint64_t seed, int form);

/// Replaces the numeric target with `classes` quantile bins, stored as a categorical column.
RawTable bin_target(RawTable table, std::size_t classes);

/// Six tables mixing latent-factor, cluster, linear and nonlinear structure.
std::vector<RawTable> desk_corpus(std::uint64_t seed, std::size_t rows = 1000);

/// Replaces column `col` with categorical cells "c<code>" built from its (integer-valued) numbers.
void make_categorical(RawTable& table, std::size_t col);

/// Plain CSV text of a raw table (header and cells as stored).
std::string to_csv(const RawTable& table);

}  // namespace tabdpt::synthetic
