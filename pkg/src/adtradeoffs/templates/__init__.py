"""Multi-class template auctions, their equilibria and counterexample instances."""
from .core import (CONSIDERATE, INDIFFERENT, PRICINGS, WELFARE, ClassedBidder, TemplateAuction,
                   TemplateOutcome, TemplateSet, allocate_templates, as_classed, is_class_selection,
                   second_highest_allocate, template_considerate_gsp, template_indifferent_gsp,
                   truthful_template_payments)
from .counterexamples import NAMES as COUNTEREXAMPLES
from .counterexamples import Counterexample, counterexample
from .mita import (MitaInstance, mita_allocate, mita_arrays, mita_prices, mita_sne_construct,
                   mita_verify_sne)
from .sne import (SECOND_HIGHEST, SELECTIONS, STANDARD, GridSearchResult, SneVerdict,
                  check_profiles, class_selection_sne, deviation_grids, sne_grid_search,
                  verify_template_sne)
