#include "pfcm/experiment.hpp"

int main(int argc, char** argv) { return pfcm::cli_main(argc, argv); }
