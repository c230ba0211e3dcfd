from didsba.bench import main

raise SystemExit(main())
