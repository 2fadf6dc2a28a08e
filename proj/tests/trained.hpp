#pragma once

#include "expadv/training.hpp"

#include "support.hpp"

namespace testing_support {

struct ToyProblem {
  expadv::mnist::Dataset train;
  expadv::mnist::Dataset test;
  expadv::model::ModelParams params;
};

/// A naturally trained MLP on real MNIST when available, else on synthetic data.
/// Built once per test binary.
inline const ToyProblem& toy_problem() {
  static const ToyProblem problem = [] {
    ToyProblem p;
    if (const auto dir = mnist_dir()) {
      p.train = expadv::mnist::load_split(*dir, true).head(3000);
      p.test = expadv::mnist::load_split(*dir, false).head(500);
    } else {
      p.train = synthetic_dataset(2000, 11);
      p.test = synthetic_dataset(500, 12);
    }
    expadv::training::TrainConfig config;
    config.arch = expadv::model::Architecture::mlp;
    config.objective = expadv::training::Objective::natural;
    config.epochs = 2;
    config.batch_size = 50;
    config.seed = 5;
    p.params = expadv::training::train(config, p.train, nullptr).params;
    return p;
  }();
  return problem;
}

}  // namespace testing_support
