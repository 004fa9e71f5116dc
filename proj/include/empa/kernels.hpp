#pragma once

// Benchmark program generators. Each kernel exists as a parallel (empa)
// variant and a single-processor (spa) baseline; both leave the same data
// segment behind.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "empa/assembler.hpp"
#include "empa/engine.hpp"

namespace empa {

struct KernelSpec {
  std::string name;                              // expr2 | vecsum | vecsum_tree | conv2d | irq_demo
  std::map<std::string, std::int64_t> params;    // missing keys take defaults
  Model variant = Model::Empa;
};

const std::vector<std::string>& kernel_names();
std::map<std::string, std::int64_t> default_params(const std::string& kernel);

// Defaults merged in and ranges checked; throws BAD_PARAMS.
std::map<std::string, std::int64_t> resolve_params(const KernelSpec& spec);

SourceUnit generate(const KernelSpec& spec);
// generate() followed by assemble() in the variant's mode.
ObjectCode build_kernel(const KernelSpec& spec);

// Input vector element i for the vector and image kernels.
inline std::int64_t input_value(std::int64_t i) { return (7 * i + 3) % 101; }

inline const std::int64_t kLaplacian[9] = {-1, -1, -1, -1, 8, -1, -1, -1, -1};

// The values a kernel computes. expr2 leaves A and B in the root's latches
// (empa) or registers (spa); every other kernel writes its data segment.
std::vector<std::int64_t> kernel_outputs(const KernelSpec& spec, const RunResult& result);

// Interrupt handler fragment of irq_demo.
inline constexpr const char* kIrqHandler = "isr";

}  // namespace empa
