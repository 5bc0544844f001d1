#pragma once

namespace vdpcr {

int cli_main(int argc, char** argv);

}  // namespace vdpcr
