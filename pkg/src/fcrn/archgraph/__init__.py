from .graph import (ArchGraph, LayerNode, count_parameters, fc_replacement_parameters, from_text,
                    memory_estimate, node_parameters, receptive_field, receptive_fields, to_text)
from .zoo import ARCHITECTURES, UnsupportedArchitecture, build_architecture
from .network import Network, instantiate, load_network
