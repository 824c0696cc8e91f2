from gkflow.cli import main
import sys
sys.exit(main())
