// Deterministic synthetic tabular datasets for the regression and count
// benchmarks: a 1030x8 concrete-strength-style table and a 17389-row
// bike-demand-style table with a seasonal attribute and overdispersed
// count targets.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "natpn/rng.hpp"

namespace fs = std::filesystem;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void write_concrete(const fs::path& path, uint64_t seed) {
  natpn::Rng rng(seed);
  std::ofstream os(path, std::ios::trunc);
  os.precision(8);
  os << "cement,slag,ash,water,superplasticizer,coarse,fine,age,strength\n";
  for (int i = 0; i < 1030; ++i) {
    double z[8];
    for (double& v : z) v = rng.normal();
    double cement = 280.0 + 100.0 * z[0];
    double slag = 75.0 + 60.0 * std::abs(z[1]);
    double ash = 55.0 + 40.0 * std::abs(z[2]);
    double water = 182.0 + 20.0 * z[3];
    double super = 6.0 + 4.0 * std::abs(z[4]);
    double coarse = 970.0 + 75.0 * z[5];
    double fine = 775.0 + 80.0 * z[6];
    double age = std::exp(3.0 + 1.2 * z[7]);  // 1..365-ish days

    // Only observable quantities drive the mean: z1/z4 enter the features
    // through |.|, so their signs must not carry signal.
    double y = 36.0 + 11.0 * std::tanh(z[0]) - 7.0 * z[3] + 5.0 * std::tanh(0.03 * (age - 41.0)) +
               2.0 * std::sin(z[5]) + 2.2 * std::abs(z[1]) + 1.5 * std::abs(z[4]) -
               1.2 * sigmoid(std::abs(z[2]));
    y += 4.5 * rng.normal();
    y = std::max(2.0, y);
    os << cement << "," << slag << "," << ash << "," << water << "," << super << "," << coarse
       << "," << fine << "," << age << "," << y << "\n";
  }
}

void write_bike(const fs::path& path, uint64_t seed) {
  natpn::Rng rng(seed);
  std::ofstream os(path, std::ios::trunc);
  os.precision(8);
  os << "season,hr,temp,atemp,hum,windspeed,holiday,weekday,workingday,weathersit,visibility,"
        "daylight,count\n";
  // season: 1 winter, 2 spring, 3 summer, 4 autumn
  const double temp_mean[5] = {0, 0.10, 0.40, 0.75, 0.50};
  const double day_mean[5] = {0, 9.0, 13.0, 16.0, 10.5};
  for (int i = 0; i < 17389; ++i) {
    int season = 1 + static_cast<int>(rng.index(4));
    double hr = static_cast<double>(rng.index(24));
    double temp = std::clamp(temp_mean[season] + 0.08 * rng.normal(), 0.0, 1.0);
    double atemp = std::clamp(temp + 0.05 * rng.normal(), 0.0, 1.0);
    double hum = std::clamp(0.6 + 0.15 * rng.normal(), 0.05, 1.0);
    double wind = std::abs(0.19 + 0.10 * rng.normal());
    double holiday = rng.uniform() < 0.03 ? 1.0 : 0.0;
    double weekday = static_cast<double>(rng.index(7));
    double workingday = (weekday >= 1 && weekday <= 5 && holiday == 0.0) ? 1.0 : 0.0;
    double weather = 1.0 + static_cast<double>(rng.index(3)) * (rng.uniform() < 0.35 ? 1.0 : 0.0);
    double daylight = day_mean[season] + 0.6 * rng.normal();
    double visibility = std::clamp(10.0 - 2.0 * (weather - 1.0) + rng.normal(), 1.0, 12.0);

    double peak =
        std::exp(-std::pow(hr - 8.0, 2) / 18.0) + std::exp(-std::pow(hr - 17.5, 2) / 20.0);
    double log_rate = 2.9 + 0.9 * peak + 0.25 * workingday + 1.3 * temp - 0.7 * hum -
                      0.4 * wind - 0.2 * (weather - 1.0) + 0.04 * daylight;
    // log-normal overdispersion: the count noise is wider than Poisson
    double rate = std::exp(log_rate + 0.22 * rng.normal());
    double y = static_cast<double>(rng.poisson(rate));
    os << season << "," << hr << "," << temp << "," << atemp << "," << hum << "," << wind << ","
       << holiday << "," << weekday << "," << workingday << "," << weather << "," << visibility
       << "," << daylight << "," << y << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic tabular dataset generator"};
  std::string out = "data";
  std::string which = "all";
  uint64_t seed = 2024;
  app.add_option("--out", out, "output directory");
  app.add_option("--which", which, "concrete | bike | all");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(out);
  if (which == "concrete" || which == "all") {
    write_concrete(fs::path(out) / "concrete_synth.csv", seed);
    std::cout << "wrote " << (fs::path(out) / "concrete_synth.csv").string() << "\n";
  }
  if (which == "bike" || which == "all") {
    write_bike(fs::path(out) / "bike_synth.csv", seed + 1);
    std::cout << "wrote " << (fs::path(out) / "bike_synth.csv").string() << "\n";
  }
  if (which != "concrete" && which != "bike" && which != "all") {
    std::cerr << "unknown --which value: " << which << "\n";
    return 2;
  }
  return 0;
}
