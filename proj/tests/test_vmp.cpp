#include <catch2/catch_amalgamated.hpp>
#include "bikvil/pipeline.hpp"
#include "bikvil/bikac.hpp"
