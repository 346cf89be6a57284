#include <exception>
#include <iostream>
#include <vector>

#include <json.hpp>

#include "runplan.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    mixest::cli::RunPlan plan = mixest::cli::parse_args(args);
    return mixest::cli::execute(plan);
  } catch (const mixest::cli::UsageError& e) {
    nlohmann::json j{{"error", e.what()}, {"type", "usage"}};
    std::cout << j.dump() << std::endl;
    return 2;
  } catch (const mixest::Error& e) {
    nlohmann::json j{{"error", e.what()}, {"type", "estimation"}};
    std::cout << j.dump() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json j{{"error", e.what()}, {"type", "internal"}};
    std::cout << j.dump() << std::endl;
    return 1;
  }
}
